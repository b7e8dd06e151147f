# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled periodic bicubic Hermite interpolation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def hermite_kernel(const double[:, :, :, ::1] nodal,
                   const double[::1] xq,
                   const double[::1] yq,
                   double h,
                   bint clip):
    """Evaluate Hermite interpolants of ``m`` fields at ``p`` points.

    ``nodal[f]`` stacks the value, x-, y- and mixed derivative of field ``f``.
    Returns an ``(m, p)`` array.
    """
    cdef Py_ssize_t m = nodal.shape[0]
    cdef Py_ssize_t n = nodal.shape[2]
    cdef Py_ssize_t p = xq.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.empty((m, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t q, f, i0, i1, j0, j1
    cdef double sx, sy, a, b, fa, fb
    cdef double a0, a1, ad0, ad1, b0, b1, bd0, bd1
    cdef double v00, v01, v10, v11, val, lo, hi
    cdef double inv_h = 1.0 / h
    with nogil:
        for q in range(p):
            sx = xq[q] * inv_h
            sy = yq[q] * inv_h
            fa = floor(sx)
            fb = floor(sy)
            a = sx - fa
            b = sy - fb
            i0 = (<Py_ssize_t> fa) % n
            if i0 < 0:
                i0 = i0 + n
            j0 = (<Py_ssize_t> fb) % n
            if j0 < 0:
                j0 = j0 + n
            i1 = i0 + 1
            if i1 == n:
                i1 = 0
            j1 = j0 + 1
            if j1 == n:
                j1 = 0
            a0 = (2.0 * a - 3.0) * a * a + 1.0
            a1 = (3.0 - 2.0 * a) * a * a
            ad0 = ((a - 2.0) * a + 1.0) * a * h
            ad1 = (a - 1.0) * a * a * h
            b0 = (2.0 * b - 3.0) * b * b + 1.0
            b1 = (3.0 - 2.0 * b) * b * b
            bd0 = ((b - 2.0) * b + 1.0) * b * h
            bd1 = (b - 1.0) * b * b * h
            for f in range(m):
                v00 = nodal[f, 0, i0, j0]
                v01 = nodal[f, 0, i0, j1]
                v10 = nodal[f, 0, i1, j0]
                v11 = nodal[f, 0, i1, j1]
                val = (a0 * (b0 * v00 + b1 * v01) + a1 * (b0 * v10 + b1 * v11)
                       + ad0 * (b0 * nodal[f, 1, i0, j0] + b1 * nodal[f, 1, i0, j1])
                       + ad1 * (b0 * nodal[f, 1, i1, j0] + b1 * nodal[f, 1, i1, j1])
                       + a0 * (bd0 * nodal[f, 2, i0, j0] + bd1 * nodal[f, 2, i0, j1])
                       + a1 * (bd0 * nodal[f, 2, i1, j0] + bd1 * nodal[f, 2, i1, j1])
                       + ad0 * (bd0 * nodal[f, 3, i0, j0] + bd1 * nodal[f, 3, i0, j1])
                       + ad1 * (bd0 * nodal[f, 3, i1, j0] + bd1 * nodal[f, 3, i1, j1]))
                if clip:
                    lo = v00
                    hi = v00
                    if v01 < lo: lo = v01
                    if v01 > hi: hi = v01
                    if v10 < lo: lo = v10
                    if v10 > hi: hi = v10
                    if v11 < lo: lo = v11
                    if v11 > hi: hi = v11
                    if val < lo: val = lo
                    if val > hi: val = hi
                out[f, q] = val
    return out_arr
