# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; see ``_pykernels`` for the reference semantics."""

from cython.parallel cimport parallel, prange
from libc.math cimport cos, exp, log, sqrt, isfinite
from libc.stdint cimport uint64_t
from libc.stdlib cimport free, malloc

import numpy as np

NAME = "cython"

cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t mix(uint64_t z) noexcept nogil:
    z = z + <uint64_t>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t chain_key(uint64_t seed, uint64_t tag, uint64_t chain) noexcept nogil:
    return mix(mix(mix(seed) ^ chain) ^ tag)


cdef inline double normal_at(uint64_t h, uint64_t j) noexcept nogil:
    cdef uint64_t a = mix(h ^ (2 * j))
    cdef uint64_t b = mix(h ^ (2 * j + 1))
    cdef double u1 = <double>((a >> 11) + 1) * INV_2_53
    cdef double u2 = <double>(b >> 11) * INV_2_53
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


def normals(uint64_t seed, uint64_t tag, Py_ssize_t chain0, Py_ssize_t n, Py_ssize_t d):
    out = np.empty((n, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef uint64_t h
    with nogil:
        for i in range(n):
            h = chain_key(seed, tag, <uint64_t>(chain0 + i))
            for j in range(d):
                o[i, j] = normal_at(h, <uint64_t>j)
    return out


cdef inline void chain_score(const double *y, double *s, double *p, Py_ssize_t K, Py_ssize_t d,
                             const double[:, ::1] means, const double[::1] logw,
                             const double[:, ::1] omega, const double[::1] phase,
                             const double[:, ::1] coef, Py_ssize_t J,
                             double field_scale, double clip_thresh) noexcept nogil:
    cdef Py_ssize_t k, j, f
    cdef double q, diff, qmax = -1e308, tot = 0.0, arg, c, nrm = 0.0
    for k in range(K):
        q = 0.0
        for j in range(d):
            diff = y[j] - means[k, j]
            q = q + diff * diff
        p[k] = logw[k] - 0.5 * q
        if p[k] > qmax:
            qmax = p[k]
    for k in range(K):
        p[k] = exp(p[k] - qmax)
        tot = tot + p[k]
    for j in range(d):
        s[j] = 0.0
    for k in range(K):
        for j in range(d):
            s[j] = s[j] + p[k] * means[k, j]
    for j in range(d):
        s[j] = s[j] / tot - y[j]
    if field_scale != 0.0:
        for f in range(J):
            arg = phase[f]
            for j in range(d):
                arg = arg + y[j] * omega[f, j]
            c = field_scale * cos(arg)
            for j in range(d):
                s[j] = s[j] + c * coef[f, j]
    if isfinite(clip_thresh):
        for j in range(d):
            nrm = nrm + s[j] * s[j]
        if nrm > clip_thresh * clip_thresh:
            for j in range(d):
                s[j] = 0.0


def score_batch(const double[:, ::1] y, const double[:, ::1] means, const double[::1] logw,
                const double[:, ::1] omega, const double[::1] phase, const double[:, ::1] coef,
                double field_scale, double clip_thresh):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], K = means.shape[0], J = omega.shape[0]
    out = np.empty((n, d))
    cdef double[:, ::1] o = out
    cdef double *p
    cdef Py_ssize_t i
    p = <double *> malloc(K * sizeof(double))
    try:
        with nogil:
            for i in range(n):
                chain_score(&y[i, 0], &o[i, 0], p, K, d, means, logw, omega, phase, coef, J,
                            field_scale, clip_thresh)
    finally:
        free(p)
    return out


def reverse_step(double[:, ::1] y, Py_ssize_t chain0, uint64_t seed, uint64_t tag,
                 double inv_sqrt_alpha, double one_minus_alpha,
                 const double[:, ::1] means, const double[::1] logw,
                 const double[:, ::1] omega, const double[::1] phase, const double[:, ::1] coef,
                 double field_scale, double clip_thresh, int threads=1):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1], K = means.shape[0], J = omega.shape[0]
    cdef double noise_sd = sqrt(one_minus_alpha)
    cdef Py_ssize_t i, j
    cdef double *buf
    cdef uint64_t h
    if threads < 1:
        threads = 1
    with nogil, parallel(num_threads=threads):
        buf = <double *> malloc((K + d) * sizeof(double))
        for i in prange(n, schedule="static"):
            chain_score(&y[i, 0], buf + K, buf, K, d, means, logw, omega, phase, coef, J,
                        field_scale, clip_thresh)
            h = chain_key(seed, tag, <uint64_t>(chain0 + i))
            for j in range(d):
                y[i, j] = (y[i, j] + one_minus_alpha * buf[K + j]) * inv_sqrt_alpha \
                    + noise_sd * normal_at(h, <uint64_t>j)
        free(buf)
