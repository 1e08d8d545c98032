# cython: language_level=3
"""Compiled versions of the hot loops in ``_kernels_py``."""
import numpy as np
from libc.math cimport sqrt, isfinite


def em_linear(double[:, ::1] x0, double[:, ::1] A, double[:, ::1] v,
              double[:, :, ::1] sig, double[:, :, ::1] z, double h):
    cdef Py_ssize_t m = x0.shape[0], n = x0.shape[1], steps = z.shape[1]
    out_arr = np.empty((m, steps + 1, n))
    cdef double[:, :, ::1] out = out_arr
    cdef double sq = sqrt(h)
    cdef double acc, noise
    cdef Py_ssize_t p, k, i, j
    cdef Py_ssize_t bad_p = -1, bad_k = -1
    with nogil:
        for p in range(m):
            for i in range(n):
                out[p, 0, i] = x0[p, i]
            for k in range(steps):
                for i in range(n):
                    acc = 0.0
                    noise = 0.0
                    for j in range(n):
                        acc = acc + A[i, j] * (out[p, k, j] + v[k, j])
                        noise = noise + sig[k, i, j] * z[p, k, j]
                    out[p, k + 1, i] = out[p, k, i] + acc * h + sq * noise
                    if not isfinite(out[p, k + 1, i]):
                        if bad_p < 0 or k + 1 < bad_k or (k + 1 == bad_k and p < bad_p):
                            bad_p = p
                            bad_k = k + 1
    if bad_p >= 0:
        return out_arr, (int(bad_p), int(bad_k))
    return out_arr, None


def ef_path_integrals(double[:, :, ::1] a, double[:, :, ::1] w, double h):
    cdef Py_ssize_t m = a.shape[0], K = a.shape[1], n = a.shape[2]
    res_arr = np.zeros(m)
    cdef double[::1] res = res_arr
    cdef double q, s, wt
    cdef Py_ssize_t p, k, i, j
    if K < 2:
        return res_arr
    with nogil:
        for p in range(m):
            s = 0.0
            for k in range(K):
                q = 0.0
                for i in range(n):
                    for j in range(n):
                        q = q + a[p, k, i] * w[k, i, j] * a[p, k, j]
                wt = 0.5 if (k == 0 or k == K - 1) else 1.0
                s = s + wt * 0.5 * q
            res[p] = h * s
    return res_arr
