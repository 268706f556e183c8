# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scatter kernel for sparse coordinate-format matrix products.

Accumulation runs in entry order, matching the numpy fallback bit for bit.
"""

import numpy as np


def coo_scatter_matmul(const long long[::1] rows,
                       const long long[::1] cols,
                       const double[::1] vals,
                       const double[:, ::1] x,
                       Py_ssize_t n_out):
    cdef Py_ssize_t nnz = rows.shape[0]
    cdef Py_ssize_t m = x.shape[1]
    out_arr = np.zeros((n_out, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, j, r, c
    cdef double v
    for e in range(nnz):
        r = rows[e]
        c = cols[e]
        v = vals[e]
        for j in range(m):
            out[r, j] += v * x[c, j]
    return out_arr
