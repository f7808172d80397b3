# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LCS and fragment-matching kernels over int64 token ids."""

from libc.stdlib cimport malloc, free


def lcs_length(const long long[::1] a, const long long[::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef long long x, diag, up
    cdef long long *row
    if n == 0 or m == 0:
        return 0
    row = <long long *> malloc((m + 1) * sizeof(long long))
    if row == NULL:
        raise MemoryError()
    try:
        for j in range(m + 1):
            row[j] = 0
        for i in range(n):
            x = a[i]
            diag = 0
            for j in range(m):
                up = row[j + 1]
                if x == b[j]:
                    row[j + 1] = diag + 1
                elif row[j] > up:
                    row[j + 1] = row[j]
                diag = up
        return row[m]
    finally:
        free(row)


def greedy_fragments(const long long[::1] article, const long long[::1] summary):
    cdef Py_ssize_t n = article.shape[0], m = summary.shape[0]
    cdef Py_ssize_t i = 0, j, k, best
    frags = []
    while i < m:
        best = 0
        for j in range(n):
            k = 0
            while i + k < m and j + k < n and summary[i + k] == article[j + k]:
                k += 1
            if k > best:
                best = k
        if best:
            frags.append(best)
            i += best
        else:
            i += 1
    return frags
