# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for the metric suite."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()


def ks_sorted(const double[::1] a, const double[::1] b):
    # ECDF gaps are tracked as integers |i m - j n| and divided once at the end
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i = 0, j = 0
    cdef long long d, best = 0
    cdef double x
    while i < n or j < m:
        if j >= m or (i < n and a[i] <= b[j]):
            x = a[i]
        else:
            x = b[j]
        while i < n and a[i] <= x:
            i += 1
        while j < m and b[j] <= x:
            j += 1
        d = <long long>i * m - <long long>j * n
        if d < 0:
            d = -d
        if d > best:
            best = d
    return <double>best / (<double>n * m)


def w1_sorted(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i = 0, j = 0
    cdef long long p = 0, pa, pb, nxt
    cdef double total = 0.0
    if n == m:
        for i in range(n):
            total += fabs(a[i] - b[i])
        return total / n
    # walk the merged quantile breakpoints, measured in units of 1/(n m)
    while i < n and j < m:
        pa = (i + 1) * <long long>m
        pb = (j + 1) * <long long>n
        nxt = pa if pa < pb else pb
        total += <double>(nxt - p) * fabs(a[i] - b[j])
        p = nxt
        if pa <= nxt:
            i += 1
        if pb <= nxt:
            j += 1
    return total / (<double>n * m)


def nearest_mixed_distance(const double[:, ::1] q_num, const long long[:, ::1] q_cat,
                           const double[:, ::1] r_num, const long long[:, ::1] r_cat):
    cdef Py_ssize_t nq = q_num.shape[0], nr = r_num.shape[0]
    cdef Py_ssize_t dn = q_num.shape[1], dc = q_cat.shape[1]
    cdef Py_ssize_t a, b, k
    cdef double best, qv
    cdef int qc
    # column-major reference copies: the inner loop over reference rows is
    # then unit-stride and free of loop-carried dependencies, so it vectorises
    cdef const double[:, ::1] rn_t = np.ascontiguousarray(np.asarray(r_num).T)
    # codes are small category indices, so int32 is exact and vectorises better
    cdef const int[:, ::1] rc_t = np.ascontiguousarray(np.asarray(r_cat).T, dtype=np.int32)
    count_buf = np.empty(max(nr, 1), dtype=np.int32)
    cdef int[::1] cnt = count_buf
    dist_buf = np.empty(max(nr, 1), dtype=np.float64)
    cdef double[::1] dist = dist_buf
    out = np.empty(nq, dtype=np.float64)
    cdef double[::1] res = out
    cdef const double* col
    cdef const int* ccol
    with nogil:
        for a in range(nq):
            for b in range(nr):
                cnt[b] = 0
            for k in range(dc):
                qc = <int>q_cat[a, k]
                ccol = &rc_t[k, 0]
                for b in range(nr):
                    cnt[b] += ccol[b] != qc
            for b in range(nr):
                dist[b] = cnt[b]
            for k in range(dn):
                qv = q_num[a, k]
                col = &rn_t[k, 0]
                for b in range(nr):
                    dist[b] += fabs(qv - col[b])
            best = INFINITY
            for b in range(nr):
                if dist[b] < best:
                    best = dist[b]
            res[a] = best
    return out
