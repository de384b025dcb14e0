# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and semantics as ``_kernels_py``."""

import numpy as np

from libc.math cimport exp, log, INFINITY
from libc.stdlib cimport malloc, free


cdef inline double _quad(const double[:, :, ::1] precs, Py_ssize_t k,
                         const double* r, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t a, b
    cdef double acc = 0.0, row
    for a in range(d):
        row = 0.0
        for b in range(a + 1, d):
            row += precs[k, a, b] * r[b]
        acc += r[a] * (precs[k, a, a] * r[a] + 2.0 * row)
    return acc


def component_logpdf(const double[:, ::1] X, const double[:, ::1] means,
                     const double[:, :, ::1] precs, const double[::1] log_norm):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], K = means.shape[0]
    cdef Py_ssize_t i, k, a
    out = np.empty((n, K), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double* r = <double*>malloc(d * sizeof(double))
    if r == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for k in range(K):
                    for a in range(d):
                        r[a] = X[i, a] - means[k, a]
                    o[i, k] = log_norm[k] - 0.5 * _quad(precs, k, r, d)
    finally:
        free(r)
    return out


cdef inline double _mix_logpdf(const double* x, const double[:, ::1] means,
                               const double[:, :, ::1] precs, const double[::1] log_norm,
                               const double[::1] log_w, double* r, double* lp,
                               Py_ssize_t K, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t k, a
    cdef double m = -INFINITY, s = 0.0
    for k in range(K):
        for a in range(d):
            r[a] = x[a] - means[k, a]
        lp[k] = log_w[k] + log_norm[k] - 0.5 * _quad(precs, k, r, d)
        if lp[k] > m:
            m = lp[k]
    if m == -INFINITY:
        return -INFINITY
    for k in range(K):
        s += exp(lp[k] - m)
    return m + log(s)


def mixture_logpdf(const double[:, ::1] X, const double[:, ::1] means,
                   const double[:, :, ::1] precs, const double[::1] log_norm,
                   const double[::1] log_w):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], K = means.shape[0]
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double* r = <double*>malloc(d * sizeof(double))
    cdef double* lp = <double*>malloc(K * sizeof(double))
    if r == NULL or lp == NULL:
        free(r)
        free(lp)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                o[i] = _mix_logpdf(&X[i, 0], means, precs, log_norm, log_w, r, lp, K, d)
    finally:
        free(r)
        free(lp)
    return out


def data_moments(const double[:, ::1] X, const double[:, ::1] means,
                 const double[:, :, ::1] precs, const double[::1] log_norm):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], K = means.shape[0]
    cdef Py_ssize_t i, k, a, b
    cdef double q
    s0_arr = np.zeros(K, dtype=np.float64)
    s1_arr = np.zeros((K, d), dtype=np.float64)
    s2_arr = np.zeros((K, d, d), dtype=np.float64)
    cdef double[::1] s0 = s0_arr
    cdef double[:, ::1] s1 = s1_arr
    cdef double[:, :, ::1] s2 = s2_arr
    cdef double* r = <double*>malloc(d * sizeof(double))
    if r == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for k in range(K):
                    for a in range(d):
                        r[a] = X[i, a] - means[k, a]
                    q = exp(log_norm[k] - 0.5 * _quad(precs, k, r, d))
                    s0[k] += q
                    for a in range(d):
                        s1[k, a] += q * r[a]
                        for b in range(a, d):
                            s2[k, a, b] += q * r[a] * r[b]
            for k in range(K):
                for a in range(d):
                    for b in range(a + 1, d):
                        s2[k, b, a] = s2[k, a, b]
    finally:
        free(r)
    return s0_arr, s1_arr, s2_arr


def entropy_moments(const double[:, :, ::1] Z, const double[:, ::1] means,
                    const double[:, :, ::1] precs, const double[::1] log_norm,
                    const double[::1] log_w, const double[::1] lower,
                    const double[::1] upper, double log_floor, double shift=0.0):
    cdef Py_ssize_t K = Z.shape[0], M = Z.shape[1], d = Z.shape[2]
    cdef Py_ssize_t k, m, a, b
    cdef bint inside
    cdef double w, ra
    e0_arr = np.zeros(K, dtype=np.float64)
    e1_arr = np.zeros((K, d), dtype=np.float64)
    e2_arr = np.zeros((K, d, d), dtype=np.float64)
    cdef double[::1] e0 = e0_arr
    cdef double[:, ::1] e1 = e1_arr
    cdef double[:, :, ::1] e2 = e2_arr
    cdef double* r = <double*>malloc(d * sizeof(double))
    cdef double* lp = <double*>malloc(K * sizeof(double))
    if r == NULL or lp == NULL:
        free(r)
        free(lp)
        raise MemoryError()
    try:
        with nogil:
            for k in range(K):
                for m in range(M):
                    inside = True
                    for a in range(d):
                        if Z[k, m, a] < lower[a] or Z[k, m, a] > upper[a]:
                            inside = False
                            break
                    if not inside:
                        continue
                    w = _mix_logpdf(&Z[k, m, 0], means, precs, log_norm, log_w, r, lp, K, d)
                    if w < log_floor:
                        w = log_floor
                    w += shift
                    e0[k] += w
                    for a in range(d):
                        ra = Z[k, m, a] - means[k, a]
                        e1[k, a] += w * ra
                        for b in range(a, d):
                            e2[k, a, b] += w * ra * (Z[k, m, b] - means[k, b])
            for k in range(K):
                for a in range(d):
                    for b in range(a + 1, d):
                        e2[k, b, a] = e2[k, a, b]
    finally:
        free(r)
        free(lp)
    return e0_arr, e1_arr, e2_arr
