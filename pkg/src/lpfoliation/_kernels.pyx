# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the recursions in ``_kernels_py``."""
import numpy as np


def exp_filter(const double[:] decay, const double[:] w_prev, const double[:] w_next,
               h, y0=None, out=None):
    cdef const double[:, :] hv = np.asarray(h, dtype=np.float64)
    cdef Py_ssize_t n = hv.shape[0], m = hv.shape[1], j, k
    if out is None:
        out = np.empty((n, m), dtype=np.float64)
    cdef double[:, :] ov = out
    if y0 is None:
        for k in range(m):
            ov[0, k] = 0.0
    else:
        y0v = np.asarray(y0, dtype=np.float64)
        for k in range(m):
            ov[0, k] = y0v[k]
    with nogil:
        for j in range(n - 1):
            for k in range(m):
                ov[j + 1, k] = (decay[k] * ov[j, k] + w_prev[k] * hv[j, k]
                                + w_next[k] * hv[j + 1, k])
    return out
