# cython: language_level=3
# cython: boundscheck=False
# cython: wraparound=False
"""Compiled grouped table-lookup GEMV. Same contract as _lut_py.lut_gemv."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def lut_gemv(const signed char[::1] values, const signed char[:, ::1] trits):
    """Grouped LUT GEMV; see the pure-python twin for the contract."""
    cdef Py_ssize_t k = trits.shape[0]
    cdef Py_ssize_t n = trits.shape[1]
    cdef Py_ssize_t groups = (k + 1) // 2
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] y = out
    cdef long long gated = 0
    cdef long long t_sum, t_diff, val
    cdef int a, b
    cdef signed char w0, w1
    cdef Py_ssize_t g, j, i0, i1
    for g in range(groups):
        i0 = 2 * g
        i1 = i0 + 1
        a = values[i0]
        b = values[i1] if i1 < k else 0
        t_sum = a + b
        t_diff = a - b
        for j in range(n):
            w0 = trits[i0, j]
            w1 = trits[i1, j] if i1 < k else 0
            if w0 == 0 and w1 == 0:
                gated += 1
                continue
            if w0 == 1:
                if w1 == 1:
                    val = t_sum
                elif w1 == -1:
                    val = t_diff
                else:
                    val = a
            elif w0 == -1:
                if w1 == 1:
                    val = -t_diff
                elif w1 == -1:
                    val = -t_sum
                else:
                    val = -a
            else:
                val = b if w1 == 1 else -b
            y[j] += val
    return out, int(groups), int(groups * n), int(gated), int(n if k % 2 else 0)
