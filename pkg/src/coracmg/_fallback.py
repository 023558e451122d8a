"""Pure-Python versions of the hot kernels.

Used when the compiled extension is unavailable or when
``CORACMG_PURE_PYTHON=1`` forces them.  Loop structure and expression shapes
mirror ``_speedups.pyx`` exactly so both backends produce bit-identical
floating-point results.
"""

from __future__ import annotations


def lcs_length(a, b) -> int:
    """Length of the longest common subsequence of two int sequences."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = [0] * (m + 1)
    cur = [0] * (m + 1)
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                pj = prev[j + 1]
                cj = cur[j]
                cur[j + 1] = pj if pj >= cj else cj
        prev, cur = cur, prev
    return prev[m]


def bm25_accumulate(doc_ids, tfs, idf, k1_plus_1, length_norm, scores) -> None:
    """Add one query term's BM25 contributions to the per-document scores.

    ``doc_ids``/``tfs`` are the term's posting arrays, ``length_norm`` holds
    the precomputed ``k1 * (1 - b + b * dl / avgdl)`` per document.
    """
    for i in range(len(doc_ids)):
        d = doc_ids[i]
        tf = tfs[i]
        scores[d] += idf * (tf * k1_plus_1) / (tf + length_norm[d])
