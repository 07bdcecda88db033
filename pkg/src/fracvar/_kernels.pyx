# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled product-integration kernel. See ``_kernels_py`` for the contract."""
import numpy as np

from cython.parallel cimport prange
from libc.math cimport exp, log, pow, sqrt, M_PI

cimport openmp

cdef double[9] _COEF
_COEF[:] = [
    0.99999999999980993, 676.5203681218851, -1259.1392167224028,
    771.32342877765313, -176.61502916214059, 12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7,
]


cdef inline double _rgamma(double x) noexcept nogil:
    # 1/Gamma(x) for x > 0; Lanczos g=7 on x + 1 >= 1, then Gamma(x) = Gamma(x+1)/x
    cdef double y = x  # (x + 1) - 1
    cdef double acc = _COEF[0]
    cdef int i
    for i in range(1, 9):
        acc += _COEF[i] / (y + i)
    cdef double tt = y + 7.5
    return x / (sqrt(2.0 * M_PI) * pow(tt, y + 0.5) * exp(-tt) * acc)


def rgamma(double x):
    return _rgamma(x)


def left_product_integrate(const double[:, :] P, const double[:, :] Y, double h,
                           rows, int num_threads=0):
    cdef long[:] krow = np.ascontiguousarray(rows, dtype=np.int64)
    cdef Py_ssize_t nr = krow.shape[0]
    cdef Py_ssize_t m = Y.shape[0]
    cdef Py_ssize_t n1 = Y.shape[1]
    out = np.zeros((m, nr))
    cdef double[:, :] o = out
    cdef double[:] log1 = np.log(np.arange(1, n1 + 1, dtype=np.float64))
    cdef double lh = log(h)
    cdef int nt = num_threads if num_threads > 0 else openmp.omp_get_max_threads()
    cdef Py_ssize_t r, j, l, k, i
    cdef double p, A, B, c, hp, ip, i1p, wfar, wnear, p_prev, i1p_prev

    for r in prange(nr, nogil=True, num_threads=nt, schedule="dynamic"):
        k = krow[r]
        # walk from the node outwards (distance index i = 0, 1, ...) so that
        # i^p and h^p/Gamma(p) can be reused while p does not change
        p_prev = -1.0
        i1p_prev = 0.0
        hp = 0.0
        for i in range(k):
            j = k - 1 - i
            p = P[r, j]
            if p != p_prev:
                hp = exp(p * lh) * _rgamma(p)
                if i > 0:
                    ip = exp(p * log1[i - 1])
                else:
                    ip = 0.0
            else:
                ip = i1p_prev
            i1p = exp(p * log1[i])
            A = (i1p - ip) / p
            B = ((i + 1.0) * i1p - i * ip) / (p + 1.0)
            c = B - i * A
            wfar = c * hp
            wnear = (A - c) * hp
            for l in range(m):
                o[l, r] = o[l, r] + wfar * Y[l, j] + wnear * Y[l, j + 1]
            p_prev = p
            i1p_prev = i1p
    return out
