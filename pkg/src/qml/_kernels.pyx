# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Jacobi symbols, character tables and the AFE sum.

Every function here has a pure-Python twin in ``qml._pykernels`` with the same
signature; ``qml.kernels`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, lgamma, sqrt, cos
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double V_SCALE = 3.141592653589793 / 8.0
cdef double QUARTER = 0.25
cdef double LGAMMA_QUARTER = lgamma(0.25)
cdef int ITMAX = 500
cdef double EPS = 1e-16
cdef double TINY = 1e-300


cdef inline int _jacobi(long long a, long long n) noexcept nogil:
    # n odd and positive
    cdef int sign = 1
    cdef long long r, tmp
    a = a % n
    if a < 0:
        a += n
    while a != 0:
        while (a & 1) == 0:
            a >>= 1
            r = n & 7
            if r == 3 or r == 5:
                sign = -sign
        tmp = a
        a = n
        n = tmp
        if (a & 3) == 3 and (n & 3) == 3:
            sign = -sign
        a = a % n
    return sign if n == 1 else 0


def jacobi(long long a, long long n):
    if n <= 0 or (n & 1) == 0:
        raise ValueError("Jacobi symbol needs odd positive n")
    return _jacobi(a, n)


cdef double _gamma_q(double a, double x) noexcept nogil:
    """Regularized upper incomplete gamma; returns -1 on non-convergence."""
    cdef double ap, term, total, b, c, d, h, an, delta
    cdef int i
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for i in range(ITMAX):
            ap += 1.0
            term *= x / ap
            total += term
            if fabs(term) < fabs(total) * EPS:
                return 1.0 - total * exp(-x + a * log(x) - lgamma(a))
        return -1.0
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, ITMAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if fabs(d) < TINY:
            d = TINY
        c = b + an / c
        if fabs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < EPS:
            return exp(-x + a * log(x) - lgamma(a)) * h
    return -1.0


def incgamma_q(double a, double x):
    cdef double q = _gamma_q(a, x)
    if q < 0.0:
        raise ArithmeticError("incomplete gamma did not converge")
    return q


cdef inline double _v_of_u(double u) noexcept nogil:
    # Q(1/4, u) with lgamma(1/4) hoisted
    cdef double ap, term, total, b, c, d, h, an, delta
    cdef int i
    if u <= 0.0:
        return 1.0
    if u < 1.25:
        ap = QUARTER
        term = 4.0
        total = term
        for i in range(ITMAX):
            ap += 1.0
            term *= u / ap
            total += term
            if term < total * EPS:
                break
        return 1.0 - total * exp(-u + QUARTER * log(u) - LGAMMA_QUARTER)
    b = u + 0.75
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, ITMAX):
        an = -i * (i - QUARTER)
        b += 2.0
        d = an * d + b
        c = b + an / c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < EPS:
            break
    return exp(-u + QUARTER * log(u) - LGAMMA_QUARTER) * h


def v_of_u(double u):
    return _v_of_u(u)


# V as a function of r = u^(1/4) is entire (V = 1 - r F(r^4)), so piecewise
# Chebyshev interpolation in r is uniformly accurate; beyond the table the
# continued fraction is used directly.
DEF VT_PIECES = 1024
DEF VT_DEG = 10
cdef double VT_UMAX = 64.0
cdef double VT_RMAX = 2.8284271247461903  # 64 ** 0.25
cdef double VT_H = VT_RMAX / VT_PIECES
cdef double VT_INV_H = VT_PIECES / VT_RMAX
cdef double vt_coef[VT_PIECES][VT_DEG + 1]


cdef void _build_v_table() noexcept nogil:
    cdef int k, j, m
    cdef double lo, mid, half, r, f[VT_DEG + 1], acc
    cdef double pi = 3.141592653589793
    for k in range(VT_PIECES):
        lo = k * VT_H
        half = 0.5 * VT_H
        mid = lo + half
        for j in range(VT_DEG + 1):
            r = mid + half * cos(pi * (j + 0.5) / (VT_DEG + 1))
            f[j] = _v_of_u(r * r * r * r)
        for m in range(VT_DEG + 1):
            acc = 0.0
            for j in range(VT_DEG + 1):
                acc += f[j] * cos(pi * m * (j + 0.5) / (VT_DEG + 1))
            vt_coef[k][m] = 2.0 * acc / (VT_DEG + 1)
        vt_coef[k][0] *= 0.5


cdef inline double _v_fast(double u) noexcept nogil:
    cdef double r, x, b0 = 0.0, b1 = 0.0, b2, x2
    cdef int k, m
    if u >= VT_UMAX:
        return _v_of_u(u)
    r = sqrt(sqrt(u))
    k = <int>(r * VT_INV_H)
    if k >= VT_PIECES:
        k = VT_PIECES - 1
    x = (r - (k + 0.5) * VT_H) * (2.0 * VT_INV_H)
    x2 = 2.0 * x
    for m in range(VT_DEG, 0, -1):
        b2 = b1
        b1 = b0
        b0 = x2 * b1 - b2 + vt_coef[k][m]
    return x * b0 - b1 + vt_coef[k][0]


_build_v_table()


def v_of_u_table(double u):
    return _v_fast(u)


cdef long long _fill_chi(long long p, long long n_max, const int[:] spf, signed char *chi) noexcept nogil:
    """chi[n] = (8p|n) for 0 <= n <= n_max; returns the number of Jacobi evaluations."""
    cdef long long n, q, evals = 0
    cdef long long eight_p = 8 * p
    chi[0] = 0
    if n_max >= 1:
        chi[1] = 1
    for n in range(2, n_max + 1):
        q = spf[n]
        if q == n:
            if n == 2 or n == p:
                chi[n] = 0
            else:
                chi[n] = <signed char>_jacobi(eight_p % n, n)
                evals += 1
        else:
            chi[n] = chi[q] * chi[n // q]
    return evals


def chi8p_fill(long long p, long long n_max, const int[:] spf):
    """Character table (8p|n), n = 0..n_max, by multiplicative extension from primes."""
    if spf.shape[0] <= n_max:
        raise ValueError("smallest-prime-factor table too short")
    out = np.zeros(n_max + 1, dtype=np.int8)
    cdef signed char[::1] view = out
    cdef long long evals
    with nogil:
        evals = _fill_chi(p, n_max, spf, &view[0])
    return out, evals


cdef double _afe_sum(long long p, long long n_max, const signed char *chi) noexcept nogil:
    # 2 * sum chi(n) n^-1/2 V(n / sqrt p), Neumaier-compensated, increasing n
    cdef double scale = V_SCALE / <double>p
    cdef double total = 0.0, comp = 0.0, term, tmp, dn
    cdef long long n
    cdef signed char c
    for n in range(1, n_max + 1):
        c = chi[n]
        if c == 0:
            continue
        dn = <double>n
        term = _v_fast(scale * dn * dn) / sqrt(dn)
        if c < 0:
            term = -term
        tmp = total + term
        if fabs(total) >= fabs(term):
            comp += (total - tmp) + term
        else:
            comp += (term - tmp) + total
        total = tmp
    return 2.0 * (total + comp)


def afe_sum(long long p, long long n_max, const signed char[:] chi):
    if chi.shape[0] <= n_max:
        raise ValueError("character table too short")
    cdef double out
    with nogil:
        out = _afe_sum(p, n_max, &chi[0])
    return out


def batch_afe(const long long[:] ps, const long long[:] truncations, const int[:] spf):
    """Central values for each p with its truncation; returns (values, jacobi evaluations)."""
    cdef Py_ssize_t i, m = ps.shape[0]
    cdef long long n_top = 0
    for i in range(m):
        if truncations[i] > n_top:
            n_top = truncations[i]
    if spf.shape[0] <= n_top:
        raise ValueError("smallest-prime-factor table too short")
    values = np.empty(m, dtype=np.float64)
    evals = np.empty(m, dtype=np.int64)
    cdef double[::1] vv = values
    cdef long long[::1] ev = evals
    cdef signed char *chi = <signed char *> malloc(n_top + 1)
    if chi == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(m):
                ev[i] = _fill_chi(ps[i], truncations[i], spf, chi)
                vv[i] = _afe_sum(ps[i], truncations[i], chi)
    finally:
        free(chi)
    return values, evals


def chi8p_matrix(const long long[:] ps, const long long[:] ns):
    """M[i, j] = (8 ps[i] | ns[j]) for odd primes ps and positive ns."""
    cdef Py_ssize_t i, j, a = ps.shape[0], b = ns.shape[0]
    out = np.zeros((a, b), dtype=np.int8)
    cdef signed char[:, ::1] view = out
    cdef long long n
    with nogil:
        for j in range(b):
            n = ns[j]
            if (n & 1) == 0:
                continue
            for i in range(a):
                view[i, j] = <signed char>_jacobi(8 * ps[i], n)
    return out
