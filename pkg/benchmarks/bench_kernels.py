"""Benchmark the compiled kernels against the pure-Python fallback.

Run as:  python3 benchmarks/bench_kernels.py

Workload sizes mirror real usage: LCS over commit-message token sequences
(short) and worst-case long sequences, and BM25 posting accumulation at the
scale of a 10K-document project partition.
"""

from __future__ import annotations

import time

import numpy as np

from coracmg import _fallback

try:
    from coracmg import _speedups
except ImportError:  # pure install
    _speedups = None


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_lcs(rng, length: int, calls: int, repeats: int = 5):
    pairs32 = [
        (
            rng.integers(0, 50, size=length).astype(np.int32),
            rng.integers(0, 50, size=length).astype(np.int32),
        )
        for _ in range(calls)
    ]
    pairs_list = [(list(a), list(b)) for a, b in pairs32]

    def pure():
        for a, b in pairs_list:
            _fallback.lcs_length(a, b)

    row = {"name": f"lcs len={length} x{calls}", "python": best_of(pure, repeats)}
    if _speedups is not None:
        def compiled():
            for a, b in pairs32:
                _speedups.lcs_length(a, b)

        row["cython"] = best_of(compiled, repeats)
    return row


def bench_bm25(rng, n_docs: int, n_terms: int, postings_per_term: int, repeats: int = 5):
    terms = [
        (
            np.sort(rng.choice(n_docs, size=postings_per_term, replace=False)).astype(np.int32),
            rng.integers(1, 9, size=postings_per_term).astype(np.float64),
            float(rng.random() * 3 + 0.1),
        )
        for _ in range(n_terms)
    ]
    norm = (0.5 + rng.random(n_docs)).astype(np.float64)

    def pure():
        scores = np.zeros(n_docs)
        for ids, tfs, idf in terms:
            _fallback.bm25_accumulate(ids, tfs, idf, 2.2, norm, scores)
        return scores

    row = {
        "name": f"bm25 {n_terms} terms x {postings_per_term} postings, {n_docs} docs",
        "python": best_of(pure, repeats),
    }
    if _speedups is not None:
        def compiled():
            scores = np.zeros(n_docs)
            for ids, tfs, idf in terms:
                _speedups.bm25_accumulate(ids, tfs, idf, 2.2, norm, scores)
            return scores

        row["cython"] = best_of(compiled, repeats)
        assert pure().tobytes() == compiled().tobytes(), "backends diverged"
    return row


def main():
    rng = np.random.default_rng(0)
    rows = [
        bench_lcs(rng, length=20, calls=2000),
        bench_lcs(rng, length=200, calls=20),
        bench_lcs(rng, length=500, calls=4),
        bench_bm25(rng, n_docs=10_000, n_terms=200, postings_per_term=2_000),
        bench_bm25(rng, n_docs=1_000, n_terms=400, postings_per_term=200),
    ]
    width = max(len(r["name"]) for r in rows)
    header = f"{'workload':<{width}}  {'python':>10}  {'cython':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for row in rows:
        python_ms = row["python"] * 1000
        if "cython" in row:
            cython_ms = row["cython"] * 1000
            speedup = row["python"] / row["cython"]
            print(f"{row['name']:<{width}}  {python_ms:>8.2f}ms  {cython_ms:>8.2f}ms  {speedup:>7.1f}x")
        else:
            print(f"{row['name']:<{width}}  {python_ms:>8.2f}ms  {'n/a':>10}  {'n/a':>8}")
    if _speedups is None:
        print("\ncompiled extension not available; showing fallback only")


if __name__ == "__main__":
    main()
