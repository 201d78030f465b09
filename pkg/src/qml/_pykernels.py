"""Pure numpy implementations of the compiled kernels (same signatures)."""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sps

from qml.arith import jacobi as _jacobi_scalar
from qml.special import V_SCALE, incomplete_gamma_reg

def jacobi(a, n):
    if n <= 0 or n % 2 == 0:
        raise ValueError("Jacobi symbol needs odd positive n")
    return _jacobi_scalar(a, n)


def jacobi_array(a, n):
    """Elementwise Jacobi symbol for int64 arrays with n odd and positive."""
    a, n = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(n, dtype=np.int64))
    shape = a.shape
    n = n.ravel().copy()
    a = a.ravel() % n
    sign = np.ones(a.shape, dtype=np.int64)
    live = a != 0
    while np.any(live):
        even = live & (a % 2 == 0)
        while np.any(even):
            a[even] //= 2
            r = n[even] % 8
            sign[even] *= np.where((r == 3) | (r == 5), -1, 1)
            even = live & (a % 2 == 0)
        a_live = a[live]
        a[live] = n[live]
        n[live] = a_live
        sign[live & (a % 4 == 3) & (n % 4 == 3)] *= -1
        a[live] %= n[live]
        live = a != 0
    return np.where(n == 1, sign, 0).reshape(shape)


def incgamma_q(a, x):
    return incomplete_gamma_reg(a, x)


def v_of_u_array(u):
    """Q(1/4, u) elementwise."""
    return sps.gammaincc(0.25, np.asarray(u, dtype=float))


def v_of_u(u):
    return float(v_of_u_array(np.array([u]))[0])


def _fill_chi(p, n_max, spf):
    chi = np.zeros(n_max + 1, dtype=np.int8)
    if n_max < 1:
        return chi, 0
    chi[1] = 1
    idx = np.arange(n_max + 1)
    fac = spf[: n_max + 1].astype(np.int64)
    prime = (fac == idx) & (idx >= 2)
    qs = idx[prime & (idx != 2) & (idx != p)]
    if len(qs):
        chi[qs] = jacobi_array(8 * p % qs, qs)
    evals = len(qs)
    comp = np.flatnonzero(~prime & (idx >= 2))
    small = fac[comp]
    cof = comp // small
    # a composite's value is final once its cofactor's is; depth <= log2(n_max)
    for _ in range(max(1, int(math.log2(max(n_max, 2))) + 1)):
        chi[comp] = chi[small] * chi[cof]
    return chi, evals


def chi8p_fill(p, n_max, spf):
    if len(spf) <= n_max:
        raise ValueError("smallest-prime-factor table too short")
    return _fill_chi(int(p), int(n_max), np.asarray(spf))


def afe_sum(p, n_max, chi):
    if len(chi) <= n_max:
        raise ValueError("character table too short")
    n = np.arange(1, n_max + 1, dtype=np.float64)
    c = np.asarray(chi[1 : n_max + 1], dtype=np.float64)
    keep = c != 0
    n, c = n[keep], c[keep]
    terms = c * v_of_u_array((V_SCALE / p) * n * n) / np.sqrt(n)
    return 2.0 * math.fsum(terms)


def batch_afe(ps, truncations, spf):
    ps = np.asarray(ps, dtype=np.int64)
    values = np.empty(len(ps))
    evals = np.empty(len(ps), dtype=np.int64)
    for i, (p, n_max) in enumerate(zip(ps.tolist(), np.asarray(truncations).tolist())):
        chi, evals[i] = _fill_chi(p, n_max, spf)
        values[i] = afe_sum(p, n_max, chi)
    return values, evals


def chi8p_matrix(ps, ns):
    ps = np.asarray(ps, dtype=np.int64)
    ns = np.asarray(ns, dtype=np.int64)
    out = np.zeros((len(ps), len(ns)), dtype=np.int8)
    odd = np.flatnonzero(ns % 2 == 1)
    if len(ps) and len(odd):
        top = (8 * ps)[:, None] % ns[None, odd]
        out[:, odd] = jacobi_array(top, np.broadcast_to(ns[None, odd], top.shape))
    return out
