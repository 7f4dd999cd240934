# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-token kernels.

Every function here has a bit-identical twin in ``_fallback.py``; the two are
checked against each other in the test suite.  The counter-based generator is
SplitMix64 evaluated at ``seed + (i + 1) * golden``, the uniform deviate takes
the top 53 bits, and ``log`` comes from libm on both sides.
"""
from libc.math cimport log
from libc.stdint cimport uint64_t, int64_t

import numpy as np

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.1102230246251565e-16
cdef double U_MIN = 5.421010862427522e-20
cdef double U_MAX = 0.9999999999999999


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t seed, Py_ssize_t i) noexcept nogil:
    cdef double u = <double>(_mix(seed + <uint64_t>(i + 1) * GOLDEN) >> 11) * TWO_M53
    if u < U_MIN:
        u = U_MIN
    elif u > U_MAX:
        u = U_MAX
    return u


cdef inline double _gumbel(uint64_t seed, Py_ssize_t i) noexcept nogil:
    return -log(-log(_uniform(seed, i)))


def mix64(uint64_t z):
    return _mix(z)


def uniform_vector(uint64_t seed, Py_ssize_t size):
    out = np.empty(size, dtype=np.float64)
    cdef double[::1] view = out
    cdef Py_ssize_t i
    for i in range(size):
        view[i] = _uniform(seed, i)
    return out


def gumbel_vector(uint64_t seed, Py_ssize_t size):
    out = np.empty(size, dtype=np.float64)
    cdef double[::1] view = out
    cdef Py_ssize_t i
    for i in range(size):
        view[i] = _gumbel(seed, i)
    return out


cdef Py_ssize_t _argmax_seeded(const double[::1] p, uint64_t seed) noexcept nogil:
    cdef Py_ssize_t i, best = -1
    cdef double score, best_score = 0.0
    for i in range(p.shape[0]):
        if p[i] > 0.0:
            score = log(p[i]) + _gumbel(seed, i)
            if best < 0 or score > best_score:
                best = i
                best_score = score
    return best


def gumbel_argmax_seeded(const double[::1] p, uint64_t seed):
    """Index maximizing ``log p + G`` over positive entries, or -1 if none."""
    return _argmax_seeded(p, seed)


def gumbel_argmax_many(const double[::1] p, const uint64_t[::1] seeds):
    out = np.empty(seeds.shape[0], dtype=np.int64)
    cdef int64_t[::1] view = out
    cdef Py_ssize_t j
    for j in range(seeds.shape[0]):
        view[j] = _argmax_seeded(p, seeds[j])
    return out


cdef inline double _excess(const double[::1] q, double eta) noexcept nogil:
    cdef double total = 0.0, d
    cdef Py_ssize_t x
    for x in range(q.shape[0]):
        d = q[x] - eta
        if d > 0.0:
            total += d
    return total


def plus_excess(const double[::1] q, double eta):
    return _excess(q, eta)


cdef Py_ssize_t _aux_select(const double[::1] q, const int64_t[::1] inv_perm,
                            double eta, uint64_t seed) noexcept nogil:
    cdef Py_ssize_t m = q.shape[0], z, best = -1
    cdef double p, score, best_score = 0.0
    for z in range(m + 1):
        if z < m:
            p = q[inv_perm[z]]
            if p > eta:
                p = eta
        else:
            p = _excess(q, eta)
        if p > 0.0:
            score = log(p) + _gumbel(seed, z)
            if best < 0 or score > best_score:
                best = z
                best_score = score
    return best


def aux_select(const double[::1] q, const int64_t[::1] inv_perm, double eta, uint64_t seed):
    """Gumbel-max draw from the auxiliary distribution built from ``q``.

    Symbol ``z < m`` has mass ``min(q[inv_perm[z]], eta)``; symbol ``m`` is the
    redundant one and carries ``sum((q - eta)_+)``.
    """
    return _aux_select(q, inv_perm, eta, seed)


def aux_select_rows(const double[:, ::1] rows, const uint64_t[::1] seeds,
                    const int64_t[::1] inv_perm, double eta):
    """Row-wise :func:`aux_select` for detection over a whole text."""
    out = np.empty(rows.shape[0], dtype=np.int64)
    cdef int64_t[::1] view = out
    cdef Py_ssize_t t
    for t in range(rows.shape[0]):
        view[t] = _aux_select(rows[t], inv_perm, eta, seeds[t])
    return out


def residual_sample(const double[::1] q, double eta, double u):
    """Inverse-CDF draw from ``(q - eta)_+`` normalized; -1 if it has no mass."""
    cdef double total = _excess(q, eta), target, acc = 0.0, d
    cdef Py_ssize_t x, last = -1
    if total <= 0.0:
        return -1
    target = u * total
    for x in range(q.shape[0]):
        d = q[x] - eta
        if d > 0.0:
            acc += d
            last = x
            if acc > target:
                return x
    return last


def categorical_sample(const double[::1] p, double u):
    """Inverse-CDF draw from an (unnormalized) non-negative vector."""
    cdef double total = 0.0, target, acc = 0.0
    cdef Py_ssize_t x, last = -1
    for x in range(p.shape[0]):
        total += p[x]
    target = u * total
    for x in range(p.shape[0]):
        if p[x] > 0.0:
            acc += p[x]
            last = x
            if acc > target:
                return x
    return last
