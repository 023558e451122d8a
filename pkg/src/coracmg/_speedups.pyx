# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: LCS table fill and BM25 posting accumulation.

Keep loop structure and expression shapes in sync with _fallback.py so the
two backends return bit-identical floats.
"""

from libc.stdlib cimport free, malloc


def lcs_length(int[::1] a, int[::1] b):
    """Length of the longest common subsequence of two int32 arrays."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    cdef int *prev = <int *> malloc((m + 1) * sizeof(int))
    cdef int *cur = <int *> malloc((m + 1) * sizeof(int))
    if prev == NULL or cur == NULL:
        free(prev)
        free(cur)
        raise MemoryError()
    cdef Py_ssize_t i, j
    cdef int ai, pj, cj
    cdef int *tmp
    try:
        for j in range(m + 1):
            prev[j] = 0
            cur[j] = 0
        for i in range(n):
            ai = a[i]
            for j in range(m):
                if ai == b[j]:
                    cur[j + 1] = prev[j] + 1
                else:
                    pj = prev[j + 1]
                    cj = cur[j]
                    cur[j + 1] = pj if pj >= cj else cj
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(prev)
        free(cur)


def bm25_accumulate(
    int[::1] doc_ids,
    double[::1] tfs,
    double idf,
    double k1_plus_1,
    double[::1] length_norm,
    double[::1] scores,
):
    """Add one query term's BM25 contributions to the per-document scores."""
    cdef Py_ssize_t i, d
    cdef double tf
    for i in range(doc_ids.shape[0]):
        d = doc_ids[i]
        tf = tfs[i]
        scores[d] += idf * (tf * k1_plus_1) / (tf + length_norm[d])
