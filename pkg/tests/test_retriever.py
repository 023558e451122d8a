from __future__ import annotations

import math
import struct

import numpy as np
import pytest

from coracmg.errors import DimensionMismatch, EmptyScope, UnknownDocument
from coracmg.providers import HashingEmbedder
from coracmg.retriever import DocHandle, RetrievalIndex, fuse
from coracmg.tokenizer import tokenize
from helpers import make_record, synthetic_corpus, twin_corpus
from oracles import oracle_bm25, oracle_minmax_fuse, oracle_rank

EMBEDDER = HashingEmbedder(64)


def build_index(records):
    return RetrievalIndex.build(records, EMBEDDER)


def test_bm25_no_shared_terms_scores_zero():
    records = [make_record(0, message="m one two three four", added=["alpha beta gamma"])]
    index = build_index(records)
    handle = DocHandle(records[0].sha, records[0].repo_full_name)
    assert index.bm25_score(["zeta", "omega"], handle) == 0.0


def test_bm25_single_doc_matches_hand_formula():
    records = [make_record(0, added=["alpha beta", "alpha gamma"])]
    index = build_index(records)
    handle = DocHandle(records[0].sha, records[0].repo_full_name)
    query = ["alpha", "beta"]
    doc_tokens = tokenize(records[0].diff)
    expected = oracle_bm25(query, doc_tokens, [doc_tokens])
    assert index.bm25_score(query, handle) == pytest.approx(expected, abs=1e-9)

    # fully explicit evaluation for one term: N=1, df=1, idf=ln(1/1.5 + 1)
    tf = doc_tokens.count("alpha")
    dl = len(doc_tokens)
    idf = math.log((1 - 1 + 0.5) / (1 + 0.5) + 1)
    norm = 1.2 * (1 - 0.75 + 0.75 * dl / dl)
    one_term = idf * tf * 2.2 / (tf + norm)
    assert index.bm25_score(["alpha"], handle) == pytest.approx(one_term, abs=1e-12)


def test_bm25_shorter_doc_scores_higher():
    short = make_record(0, added=["target term"], context=["pad"])
    long = make_record(
        1, added=["target term"], context=[f"pad filler {i}" for i in range(30)]
    )
    index = build_index([short, long])
    s = index.bm25_score(["target"], DocHandle(short.sha, short.repo_full_name))
    l = index.bm25_score(["target"], DocHandle(long.sha, long.repo_full_name))
    assert s > l


def test_semantic_score_unit_vectors():
    records = [make_record(0)]
    index = build_index(records)
    handle = DocHandle(records[0].sha, records[0].repo_full_name)
    stored = index.partitions[records[0].repo_full_name].vectors[0]
    assert index.semantic_score(stored.astype(np.float32), handle) == pytest.approx(1.0, abs=1e-6)
    orthogonal = np.zeros(64)
    axis = int(np.argmin(np.abs(stored)))
    orthogonal[axis] = 1.0
    orthogonal -= float(stored[axis]) * stored  # project out the stored direction
    orthogonal /= np.linalg.norm(orthogonal)
    assert index.semantic_score(orthogonal, handle) == pytest.approx(0.0, abs=1e-6)
    rng = np.random.default_rng(0)
    vec = rng.standard_normal(64)
    vec = vec / np.linalg.norm(vec)
    naive = sum(float(a) * float(b) for a, b in zip(stored, vec))
    assert index.semantic_score(vec, handle) == pytest.approx(naive, abs=1e-12)
    with pytest.raises(DimensionMismatch):
        index.semantic_score(np.ones(3), handle)
    with pytest.raises(UnknownDocument):
        index.semantic_score(vec, DocHandle("f" * 40, "acme/widgets"))


def test_index_vectors_are_unit_norm():
    index = build_index(synthetic_corpus(2, 10))
    for part in index.partitions.values():
        norms = np.linalg.norm(part.vectors, axis=1)
        assert np.all(np.abs(norms - 1.0) < 1e-6)


def test_fuse_conventions():
    assert fuse([(3.0, 0.2)]) == [0.5]  # single candidate: both families constant
    hybrid = fuse([(1.0, 1.0), (0.0, 0.0)])
    assert hybrid[0] == 1.0 and hybrid[1] == 0.0
    with pytest.raises(ValueError):
        fuse([])


def test_fuse_matches_oracle():
    import random

    rng = random.Random(4)
    for _ in range(30):
        pairs = [(rng.uniform(-5, 5), rng.uniform(-1, 1)) for _ in range(rng.randrange(1, 9))]
        assert fuse(pairs) == pytest.approx(oracle_minmax_fuse(pairs), abs=1e-12)


def _oracle_docs(index, repo):
    part = index.partitions[repo]
    return [
        {
            "sha": doc.sha,
            "date": doc.date,
            "diff": doc.diff,
            "message": doc.message,
            "tokens": tokenize(doc.diff),
            "vector": [float(v) for v in part.vectors[i]],
        }
        for i, doc in enumerate(part.docs)
    ]


def test_retrieve_matches_bruteforce_on_synthetic_partitions():
    records = synthetic_corpus(6, 40, seed=11)
    index = build_index(records)
    queries = [records[3], records[47], records[120], records[200]]
    for query in queries:
        repo = query.repo_full_name
        docs = _oracle_docs(index, repo)
        qvec = [float(v) for v in EMBEDDER.embed(query.diff)]
        expected = oracle_rank(docs, tokenize(query.diff), qvec, exclude_sha=query.sha)
        expected = [d for d in expected if d["diff"] != query.diff]
        for k in (1, 3, 5):
            got = index.retrieve(query.diff, k, repo, exclude_sha=query.sha, embedder=EMBEDDER)
            assert [p.handle.sha for p in got] == [d["sha"] for d in expected[:k]]


def test_leakage_guard_returns_second_ranked():
    records = twin_corpus(1, 6, seed=2)
    index = build_index(records)
    query = records[0]  # its twin is records[1]
    got = index.retrieve(
        query.diff, 1, query.repo_full_name, exclude_sha=None, embedder=EMBEDDER
    )
    # records[0] itself ranks first (byte-identical) and must be skipped.
    assert got[0].handle.sha == records[1].sha
    assert got[0].message == query.message
    assert got[0].diff != query.diff


def test_singleton_partition():
    records = [make_record(0)]
    index = build_index(records)
    got = index.retrieve("diff --git a/x b/x", 1, records[0].repo_full_name, embedder=EMBEDDER)
    assert got[0].handle.sha == records[0].sha


def test_partial_results_warn_but_return(caplog):
    records = [make_record(0), make_record(1, added=["different content"])]
    index = build_index(records)
    with caplog.at_level("WARNING"):
        got = index.retrieve(
            "diff --git a/q b/q", 5, records[0].repo_full_name, embedder=EMBEDDER
        )
    assert len(got) == 2
    assert any("admissible" in r.message for r in caplog.records)


def test_empty_scope_errors():
    records = [make_record(0)]
    index = build_index(records)
    with pytest.raises(EmptyScope):
        index.retrieve("x", 1, "acme/unknown-project", embedder=EMBEDDER)
    with pytest.raises(EmptyScope):
        index.retrieve(
            "x", 1, records[0].repo_full_name, exclude_sha=records[0].sha, embedder=EMBEDDER
        )
    with pytest.raises(EmptyScope):
        # sole candidate is byte-identical to the query
        index.retrieve(records[0].diff, 1, records[0].repo_full_name, embedder=EMBEDDER)


def test_scope_purity_and_no_leak():
    records = synthetic_corpus(3, 15, seed=9)
    index = build_index(records)
    query = records[20]
    got = index.retrieve(
        query.diff, 5, query.repo_full_name, exclude_sha=query.sha, embedder=EMBEDDER
    )
    for pair in got:
        assert pair.handle.repo_full_name == query.repo_full_name
        assert pair.handle.sha != query.sha
        assert pair.diff != query.diff


def test_deterministic_ordering():
    records = synthetic_corpus(2, 30, seed=5)
    index = build_index(records)
    query = records[10]
    runs = [
        tuple(
            p.handle.sha
            for p in index.retrieve(
                query.diff, 5, query.repo_full_name, exclude_sha=query.sha, embedder=EMBEDDER
            )
        )
        for _ in range(3)
    ]
    assert len(set(runs)) == 1


def test_tie_break_on_identical_documents():
    # Two byte-identical docs (distinct shas/dates): same scores, so the
    # newer date must win.
    twin_a = make_record(0, added=["same body"])
    twin_b = make_record(1, added=["same body"])
    assert twin_a.diff == twin_b.diff
    filler = make_record(2, added=["totally different text here"])
    index = build_index([twin_a, twin_b, filler])
    got = index.retrieve(
        "diff --git a/q b/q\nquery text", 3, twin_a.repo_full_name, embedder=EMBEDDER
    )
    shas = [p.handle.sha for p in got]
    assert shas.index(twin_b.sha) < shas.index(twin_a.sha)  # newer first


def test_save_load_round_trip(tmp_path):
    records = synthetic_corpus(3, 12, seed=13)
    index = build_index(records)
    index.save(tmp_path / "idx")
    loaded = RetrievalIndex.load(tmp_path / "idx")
    assert loaded.dimension == index.dimension
    assert set(loaded.partitions) == set(index.partitions)
    query = records[5]
    a = index.retrieve(query.diff, 3, query.repo_full_name, exclude_sha=query.sha, embedder=EMBEDDER)
    b = loaded.retrieve(query.diff, 3, query.repo_full_name, exclude_sha=query.sha, embedder=EMBEDDER)
    assert [p.handle for p in a] == [p.handle for p in b]
    assert [p.hybrid_score for p in a] == pytest.approx([p.hybrid_score for p in b], abs=1e-7)


def test_load_rejects_corrupt_files(tmp_path):
    records = synthetic_corpus(1, 3, seed=0)
    index = build_index(records)
    index.save(tmp_path / "idx")
    vectors = tmp_path / "idx" / "vectors.bin"
    vectors.write_bytes(b"XXXX" + vectors.read_bytes()[4:])
    with pytest.raises(ValueError, match="magic"):
        RetrievalIndex.load(tmp_path / "idx")

    index.save(tmp_path / "idx2")
    manifest = tmp_path / "idx2" / "manifest.json"
    manifest.write_text('{"magic": "something-else"}')
    with pytest.raises(ValueError, match="not an index"):
        RetrievalIndex.load(tmp_path / "idx2")


def test_k_must_be_positive():
    records = [make_record(0)]
    index = build_index(records)
    with pytest.raises(ValueError):
        index.retrieve("x", 0, records[0].repo_full_name, embedder=EMBEDDER)


def test_vectors_bin_layout(tmp_path):
    records = synthetic_corpus(2, 4, seed=1)
    index = build_index(records)
    index.save(tmp_path / "idx")
    raw = (tmp_path / "idx" / "vectors.bin").read_bytes()
    assert raw[:4] == b"CMGV"
    version, count, dim = struct.unpack("<III", raw[4:16])
    assert (version, count, dim) == (1, 8, 64)
    assert len(raw) == 16 + count * dim * 4
    matrix = np.frombuffer(raw[16:], dtype="<f4").reshape(count, dim)
    assert np.allclose(np.linalg.norm(matrix, axis=1), 1.0, atol=1e-6)
    files = sorted(p.name for p in (tmp_path / "idx").iterdir())
    assert files == ["lexical.bin", "manifest.json", "vectors.bin"]


def test_unknown_document_error():
    index = build_index([make_record(0)])
    with pytest.raises(UnknownDocument):
        index.bm25_score(["x"], DocHandle("9" * 40, "acme/widgets"))


def test_batch_and_single_doc_bm25_are_bit_equal():
    # retrieve() scores through the posting-list kernel; the bm25_score op
    # walks one document at a time. Same expression, same term order, so
    # the floats must match exactly, not just approximately.
    records = synthetic_corpus(1, 40, seed=77)
    index = build_index(records)
    repo = records[0].repo_full_name
    part = index.partitions[repo]
    query_tokens = tokenize(records[7].diff)
    batch = index._batch_lexical(part, query_tokens)
    for i, doc in enumerate(part.docs):
        single = index.bm25_score(query_tokens, DocHandle(doc.sha, repo))
        assert batch[i] == single  # exact equality


def test_concurrent_queries_agree():
    # The index is immutable after build; parallel queries must return the
    # same ranking as sequential ones.
    from concurrent.futures import ThreadPoolExecutor

    records = synthetic_corpus(2, 25, seed=23)
    index = build_index(records)
    queries = [records[i] for i in (0, 7, 14, 30, 41)]

    def rank(query):
        pairs = index.retrieve(
            query.diff, 3, query.repo_full_name, exclude_sha=query.sha, embedder=EMBEDDER
        )
        return tuple(p.handle.sha for p in pairs)

    sequential = [rank(q) for q in queries]
    with ThreadPoolExecutor(max_workers=5) as pool:
        for _ in range(5):
            parallel = list(pool.map(rank, queries))
            assert parallel == sequential
