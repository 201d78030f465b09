"""Moment sums over the family chi_8p and their predicted main terms.

Every sum runs over odd primes p with weight log p, either sharp (2 < p <= X)
or smoothed by PHI(p / X). Central values come from an :class:`LValueTable`;
a missing prime raises :class:`MissingValuesError` naming the gap. Reductions
use ``math.fsum`` (exactly rounded, so independent of chunking) or
``logsumexp`` for products that overflow double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sps
from scipy.special import logsumexp

from qml import kernels, mollifier
from qml.arith import factor_stats, prime_sums, table_covering
from qml.errors import AccuracyError, DomainError
from qml.lcentral import LValueTable
from qml.special import GAMMA_QUARTER, PHI, SmoothWeight, hurwitz_zeta, mellin, mellin_fixed

WEIGHTS = ("sharp", "smooth")
POWERS = ("L^k", "L*N", "L^2*N", "N+Q", "N^2+Q^2")


# -- prime ranges -------------------------------------------------------------------------


def family_primes(X: float, weight: str = "sharp", w: SmoothWeight = PHI) -> np.ndarray:
    """Odd primes carrying nonzero weight: 2 < p <= X, or p/X inside the support of w."""
    if weight == "sharp":
        return table_covering(X).odd_between(2, X)
    if weight == "smooth":
        lo, hi = w.support
        return table_covering(hi * X).odd_between(lo * X, hi * X)
    raise DomainError(f"weight must be one of {WEIGHTS}, got {weight!r}")


def family_weights(ps: np.ndarray, X: float, weight: str = "sharp", w: SmoothWeight = PHI) -> np.ndarray:
    logs = np.log(ps.astype(float))
    if weight == "sharp":
        return logs
    return logs * w(ps / X)


# -- smoothed character sums ----------------------------------------------------------------


def is_square(n: int) -> bool:
    return n >= 0 and math.isqrt(n) ** 2 == n


@dataclass(frozen=True)
class CharSum:
    c: int
    X: float
    sum: float
    main: float

    @property
    def residual(self) -> float:
        return self.sum - self.main


def smoothed_charsum(c: int, X: float, w: SmoothWeight = PHI) -> CharSum:
    """sum_p log p chi_8p(c) w(p/X) with main term w^(1) X when c is a square."""
    c = int(c)
    if c < 1 or c % 2 == 0:
        raise DomainError(f"c must be an odd positive integer, got {c}")
    if X < 100:
        raise DomainError(f"X must be >= 100, got {X}")
    ps = family_primes(X, "smooth", w)
    weights = family_weights(ps, X, "smooth", w)
    if c == 1:
        chi = np.ones(len(ps))
    else:
        # chi_8p(c) = (8p | c) depends only on 8p mod c
        residues = kernels.python_kernels.jacobi_array(np.arange(c, dtype=np.int64), c)
        chi = residues[(8 * ps) % c].astype(float)
    total = math.fsum(weights * chi)
    main = mellin(w, 1).real * X if is_square(c) else 0.0
    return CharSum(c, float(X), total, main)


# -- moment sums ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentSum:
    k: float
    X: float
    weight: str
    power: str
    value: float
    log_value: float
    error_bound: float
    count: int
    negatives: int


def _lvalues(table: LValueTable, ps):
    sub = table.select(ps)
    return sub.value, sub.tail_bound


def _powk(L, k):
    if k == 0:
        return np.ones_like(L)
    if float(k).is_integer():
        return L ** int(k)
    return np.abs(L) ** k


def moment_sum(
    k: float,
    X: float,
    table: LValueTable | None = None,
    weight: str = "sharp",
    power: str = "L^k",
    params: mollifier.MollifierParams | None = None,
    M: int = 1,
    w: SmoothWeight = PHI,
) -> MomentSum:
    """Weighted sum over the family of one of the power expressions.

    ``power``:
      * ``"L^k"``      L^k (|L|^k for fractional k)
      * ``"L*N"``      L N(p, 2k-1)
      * ``"L^2*N"``    L^2 N(p, 2k-2)
      * ``"N+Q"``      prod_i (N_i(p, 2k) + Q_i(p, k)^r_k)
      * ``"N^2+Q^2"``  prod_i (N_i(p, k)^2 + Q_i(p, k)^(2 r_k))

    The mollified forms build ``params`` from (k, X, M) unless given. The
    reported error bound propagates each certified tail to first order.
    """
    if k < 0:
        raise DomainError(f"k must be >= 0, got {k}")
    if power not in POWERS:
        raise DomainError(f"power must be one of {POWERS}, got {power!r}")
    ps = family_primes(X, weight, w)
    wts = family_weights(ps, X, weight, w)
    if power == "L^k" and k == 0:
        # independent of the central values
        value = prime_sums(X)[0] - math.log(2) if weight == "sharp" else math.fsum(wts)
        return MomentSum(k, X, weight, power, value, math.log(value), 0.0, len(ps), 0)
    if power != "L^k" and params is None:
        params = mollifier.build_params(k, X, M)

    if power in ("N+Q", "N^2+Q^2"):
        log_terms = np.log(wts) + log_penalty_products(ps, k, params, power)
        log_value = float(logsumexp(log_terms)) if len(ps) else -math.inf
        # the value itself may exceed double range; log_value stays exact
        with np.errstate(over="ignore"):
            value = float(np.exp(log_value))
        return MomentSum(k, X, weight, power, value, log_value, 0.0, len(ps), 0)

    L, tails = _lvalues(table, ps)
    negatives = int(np.count_nonzero(L < 0))
    if power == "L^k":
        f = _powk(L, k)
        with np.errstate(divide="ignore"):
            df = k * np.abs(L) ** (k - 1)
    else:
        P = mollifier.block_sums(ps, params)
        if power == "L*N":
            n = np.exp(mollifier.log_n_product(P, 2 * k - 1, params))
            f, df = L * n, n
        else:
            n = np.exp(mollifier.log_n_product(P, 2 * k - 2, params))
            f, df = L * L * n, 2 * np.abs(L) * n
    value = math.fsum(wts * f)
    err = math.fsum(wts * df * tails)
    log_value = math.log(value) if value > 0 else -math.inf
    return MomentSum(k, X, weight, power, value, log_value, err, len(ps), negatives)


def log_penalty_products(ps, k: float, params, power: str = "N+Q") -> np.ndarray:
    """log prod_i (N_i(p, 2k) + Q_i^r_k) or log prod_i (N_i(p, k)^2 + Q_i^(2 r_k))."""
    r = mollifier.r_exponent(k)
    P = mollifier.block_sums(ps, params)
    log_q = mollifier.log_q_factors(P, k, params)
    if power == "N+Q":
        log_n = np.log(mollifier.n_factors(P, 2 * k, params))
        return np.logaddexp(log_n, r * log_q).sum(axis=1)
    log_n = np.log(mollifier.n_factors(P, k, params))
    return np.logaddexp(2 * log_n, 2 * r * log_q).sum(axis=1)


def normalizer(k: float, X: float) -> float:
    return X * math.log(X) ** (k * (k + 1) / 2)


# -- twisted first moment --------------------------------------------------------------------------


def _residue_integrand(s, X, ell1, w):
    s = np.asarray(s, dtype=complex)
    phi_hat = mellin_fixed(w, 1 + s / 2)
    gamma_ratio = sps.gamma(s / 2 + 0.25) / GAMMA_QUARTER
    zeta = hurwitz_zeta(1 + 2 * s, 1.0)
    g = (
        phi_hat
        * np.exp(s / 2 * math.log(8 / math.pi))
        * gamma_ratio
        * np.exp(s * math.log(math.sqrt(X) / ell1))
        * (1 - np.exp(-(1 + 2 * s) * math.log(2)))
    )
    return 2 * X / math.sqrt(ell1) * g * zeta / s


def residue_at_zero(X: float, ell1: int, radius: float, nodes: int = 64, w: SmoothWeight = PHI) -> float:
    """Residue at s = 0 by the trapezoid rule on |s| = radius (geometric convergence)."""
    theta = 2 * math.pi * (np.arange(nodes) + 0.5) / nodes
    s = radius * np.exp(1j * theta)
    vals = _residue_integrand(s, X, ell1, w) * s
    return float(np.mean(vals).real)


def twisted_main_term(ell: int, X: float, w: SmoothWeight = PHI, rel_tol: float = 1e-8) -> float:
    ell1 = factor_stats(ell).ell1
    a = residue_at_zero(X, ell1, 1 / 8, w=w)
    b = residue_at_zero(X, ell1, 1 / 16, w=w)
    if abs(a - b) > rel_tol * max(abs(a), abs(b)):
        raise AccuracyError(f"residue disagrees between radii: {a!r} vs {b!r}")
    return a


@dataclass(frozen=True)
class TwistedMoment:
    ell: int
    ell1: int
    X: float
    sum: float
    main: float

    @property
    def rel_dev(self) -> float:
        return abs(self.sum - self.main) / abs(self.main) if self.main else math.inf


def twisted_first_moment(ell: int, X: float, table: LValueTable, w: SmoothWeight = PHI) -> TwistedMoment:
    """sum_p log p L(1/2, chi_8p) chi_8p(ell) w(p/X) against the residue main term."""
    ell = int(ell)
    if ell < 1:
        raise DomainError(f"ell must be >= 1, got {ell}")
    if ell > math.sqrt(X):
        raise DomainError(f"ell must be <= sqrt(X) = {math.sqrt(X):.6g}, got {ell}")
    ps = family_primes(X, "smooth", w)
    wts = family_weights(ps, X, "smooth", w)
    L, _ = _lvalues(table, ps)
    chi = kernels.chi8p_matrix(ps, np.array([ell], dtype=np.int64))[:, 0].astype(float)
    total = math.fsum(wts * L * chi)
    return TwistedMoment(ell, factor_stats(ell).ell1, float(X), total, twisted_main_term(ell, X, w))


# -- Hoelder chains ----------------------------------------------------------------------------------


def holder_exponents(k: float) -> tuple[float, ...]:
    """Hoelder exponents of the chain for this k (each >= 1, reciprocals summing to 1)."""
    if k <= 0 or k == 0.5:
        raise DomainError("Hoelder chain needs k > 0 and k != 1/2")
    if k > 0.5:
        return (2 * k, 2 * k / (2 * k - 1))
    c = 1 / (2 / k - 3)
    return (2 * k / c, 2 / (1 - c), 1 / ((1 + c) / 2 - c / (2 * k)))


@dataclass
class HolderReport:
    k: float
    exponents: tuple
    lhs: float
    log_rhs: float
    log_rhs_penalty: float | None
    factors: dict = field(default_factory=dict)
    tol: float = 1e-9

    @property
    def holds(self) -> bool:
        return math.log(self.lhs) <= self.log_rhs + math.log1p(self.tol) if self.lhs > 0 else True

    @property
    def holds_penalty(self) -> bool | None:
        if self.log_rhs_penalty is None:
            return None
        return math.log(self.lhs) <= self.log_rhs_penalty + math.log1p(self.tol) if self.lhs > 0 else True

    @property
    def exponents_ok(self) -> bool:
        return all(e >= 1 for e in self.exponents) and abs(sum(1 / e for e in self.exponents) - 1) < 1e-12


def holder_chain_from_arrays(k: float, wts, L, n_of, log_penalty=None, tol: float = 1e-9) -> HolderReport:
    """Both sides of the Hoelder chain from raw arrays.

    ``n_of(alpha)`` returns N(p, alpha) per prime. ``log_penalty`` (optional)
    holds log prod_i (N_i(p, 2k) + Q_i^r_k) for the penalty form of the bound.
    """
    wts = np.asarray(wts, dtype=float)
    L = np.asarray(L, dtype=float)
    absL = np.abs(L)
    exps = holder_exponents(k)
    lhs = math.fsum(wts * L * n_of(2 * k - 1))
    s_2k = math.fsum(wts * absL ** (2 * k))
    factors = {"sum_L2k": s_2k}
    if k > 0.5:
        s_n = math.fsum(wts * n_of(2 * k - 1) ** (2 * k / (2 * k - 1)))
        factors["sum_N"] = s_n
        log_rhs = math.log(s_2k) / (2 * k) + (1 - 1 / (2 * k)) * math.log(s_n)
        third_exp = 1 - 1 / (2 * k)
    else:
        c = 1 / (2 / k - 3)
        s_l2n = math.fsum(wts * L * L * n_of(2 * k - 2))
        s_n = math.fsum(wts * n_of(2 * k - 1) ** (2 * (2 - 3 * k) / (1 - 2 * k)) * n_of(2 - 2 * k) ** 2)
        factors |= {"sum_L2N": s_l2n, "sum_N": s_n}
        third_exp = (1 + c) / 2 - c / (2 * k)
        log_rhs = c / (2 * k) * math.log(s_2k) + (1 - c) / 2 * math.log(s_l2n) + third_exp * math.log(s_n)
    log_rhs_pen = None
    if log_penalty is not None:
        log_pen = float(logsumexp(np.log(wts) + np.asarray(log_penalty)))
        factors["log_sum_penalty"] = log_pen
        log_rhs_pen = log_rhs - third_exp * math.log(s_n) + third_exp * log_pen
    return HolderReport(k, exps, lhs, log_rhs, log_rhs_pen, factors, tol)


def holder_chain_check(k: float, X: float, table: LValueTable, M: int = 1, w: SmoothWeight = PHI) -> HolderReport:
    """Evaluate the chain on real data with smooth weights."""
    if k <= 0 or k == 0.5:
        raise DomainError("Hoelder chain needs k > 0 and k != 1/2")
    params = mollifier.build_params(k, X, M)
    ps = family_primes(X, "smooth", w)
    wts = family_weights(ps, X, "smooth", w)
    keep = wts > 0
    ps, wts = ps[keep], wts[keep]
    L, _ = _lvalues(table, ps)
    P = mollifier.block_sums(ps, params)

    def n_of(alpha):
        return np.exp(mollifier.log_n_product(P, alpha, params))

    return holder_chain_from_arrays(k, wts, L, n_of, log_penalty_products(ps, k, params, "N+Q"))


# -- large deviations and the GRH upper bound ------------------------------------------------------------


@dataclass(frozen=True)
class DeviationHistogram:
    X: float
    V: tuple
    counts: tuple
    gaussian_proxy: tuple
    nonpositive: int
    total: int

    def rows(self):
        return [
            {"V": v, "count": c, "gaussian_proxy": g} for v, c, g in zip(self.V, self.counts, self.gaussian_proxy)
        ]


def deviation_counts(X: float, V_grid, table: LValueTable) -> DeviationHistogram:
    """#{2 < p <= X : log L >= V + (1/2) log log X} for each V, nonpositive values set aside."""
    ps = family_primes(X, "sharp")
    L, _ = _lvalues(table, ps)
    positive = L > 0
    logs = np.sort(np.log(L[positive]))
    shift = 0.5 * math.log(math.log(X))
    V = [float(v) for v in V_grid]
    counts = [int(len(logs) - np.searchsorted(logs, v + shift, side="left")) for v in V]
    loglog = math.log(math.log(X))
    proxy = [X / math.log(X) * math.exp(-v * v / (2 * loglog)) for v in V]
    return DeviationHistogram(float(X), tuple(V), tuple(counts), tuple(proxy), int((~positive).sum()), len(ps))


def log_upper_bound_rhs_many(ps, x: float, X: float) -> np.ndarray:
    """sum_{q <= x} chi_8p(q) q^(-1/2-1/log x) log(x/q)/log x + (1/2) log log x + log X / log x."""
    if x < 2:
        raise DomainError(f"x must be >= 2, got {x}")
    ps = np.atleast_1d(np.asarray(ps, dtype=np.int64))
    if np.any(ps > X):
        raise DomainError("need p <= X")
    lx = math.log(x)
    qs = table_covering(x).odd_between(2, x)  # chi_8p(2) = 0
    lq = np.log(qs.astype(float))
    coef = np.exp(-(0.5 + 1 / lx) * lq) * (lx - lq) / lx
    chi = kernels.chi8p_matrix(ps, qs).astype(float)
    return mollifier._row_sums(chi * coef[None, :]) + 0.5 * math.log(lx) + math.log(X) / lx


def log_upper_bound_rhs(p: int, x: float, X: float) -> float:
    return float(log_upper_bound_rhs_many([p], x, X)[0])


@dataclass(frozen=True)
class UpperBoundDiagnostic:
    X: float
    x: float
    max_discrepancy: float
    quantiles: dict
    halves: tuple
    excluded: int


def upper_bound_diagnostic(X: float, table: LValueTable, x: float | None = None) -> UpperBoundDiagnostic:
    """Distribution of log L(1/2, chi_8p) minus the bound's right side over 2 < p <= X."""
    x = math.log(X) ** 2 if x is None else x
    ps = family_primes(X, "sharp")
    L, _ = _lvalues(table, ps)
    good = L > 0
    diff = np.log(L[good]) - log_upper_bound_rhs_many(ps[good], x, X)
    half = len(diff) // 2
    qs = {str(q): float(np.quantile(diff, q)) for q in (0.5, 0.9, 0.99)}
    return UpperBoundDiagnostic(
        float(X), float(x), float(diff.max()), qs, (float(diff[:half].max()), float(diff[half:].max())), int((~good).sum())
    )


# -- magnitude report -------------------------------------------------------------------------------------


@dataclass
class MomentReport:
    k: float
    X_grid: list
    sums: list
    normalized: list
    error_bounds: list
    metadata: dict = field(default_factory=dict)

    @property
    def band_ratio(self) -> float:
        vals = [v for v in self.normalized if v > 0]
        return max(vals) / min(vals) if vals else math.nan

    def rows(self):
        return [
            {"k": self.k, "X": x, "sum": s, "normalized": n, "band_ratio": self.band_ratio}
            for x, s, n in zip(self.X_grid, self.sums, self.normalized)
        ]


REPORT_HEADER = ("k", "X", "sum", "normalized", "band_ratio")


def magnitude_report(k_list, X_grid, table: LValueTable | None, weight: str = "sharp") -> list[MomentReport]:
    reports = []
    for k in k_list:
        sums, norms, errs = [], [], []
        for X in X_grid:
            ms = moment_sum(k, X, table, weight=weight)
            sums.append(ms.value)
            errs.append(ms.error_bound)
            norms.append(ms.value / normalizer(k, X))
        meta = {"weight": weight, "power": "L^k", "eps": None if table is None else table.eps}
        reports.append(MomentReport(float(k), [float(x) for x in X_grid], sums, norms, errs, meta))
    return reports
