"""Mollifier apparatus: the alpha ladder, truncated exponentials and prime blocks.

For a moment parameter k and family size X the primes in (2, X^alpha_I] are
cut into blocks (X^alpha_{i-1}, X^alpha_i]. Each block carries a degree
h_i = ceil(e^2 k alpha_i^(-3/4)) and the mollifier factor

    N_i(p, a) = E_{h_i}(a P_i(p)),   P_i(p) = sum_{q in block i} chi_8p(q) / sqrt(q),

where E_y is the Taylor polynomial of exp of degree 2 ceil(y). Everything is
vectorized over p; block sums for many primes come from one character matrix.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from qml import kernels
from qml.arith import prime_sums, table_covering
from qml.errors import CapacityError, ConfigurationError, DomainError

E2 = math.e**2
DEFAULT_EXPANSION_BUDGET = 2_000_000


class LadderWarning(UserWarning):
    """A large-X assumption of the ladder fails at the requested X."""


@dataclass(frozen=True)
class MollifierParams:
    k: float
    X: float
    M: int
    alphas: tuple[float, ...]  # alpha_0 .. alpha_I
    I: int
    degrees: tuple[int, ...]  # h_1 .. h_I
    block_bounds: tuple[tuple[float, float], ...]
    warnings: tuple[str, ...] = ()
    _blocks: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def degree(self, i: int) -> int:
        self._check_block(i)
        return self.degrees[i - 1]

    def K(self, i: int) -> int:
        """Polynomial degree 2 h_i of block i."""
        return 2 * self.degree(i)

    def log_top(self, j: int) -> float:
        """log X^alpha_j."""
        return self.alphas[j] * math.log(self.X)

    def block_primes(self, i: int) -> np.ndarray:
        """Odd primes q with X^alpha_{i-1} < q <= X^alpha_i (2 is never inside)."""
        self._check_block(i)
        if i not in self._blocks:
            lo, hi = self.block_bounds[i - 1]
            self._blocks[i] = table_covering(hi).odd_between(lo, hi)
        return self._blocks[i]

    def _check_block(self, i):
        if not 1 <= i <= self.I:
            raise DomainError(f"block index must lie in [1, {self.I}], got {i}")


def ladder(X: float, M: int) -> tuple[list[float], int]:
    """alpha_0..alpha_I and I = 1 + max{i >= 0 : alpha_i <= 10^-M}."""
    loglog = math.log(math.log(X))
    cutoff = 10.0**-M
    alphas = [math.log(2) / math.log(X)]
    i = 1
    while True:
        a = 20.0 ** (i - 1) / loglog**2
        if a > cutoff:
            break
        alphas.append(a)
        i += 1
    if alphas[0] > cutoff and len(alphas) == 1:
        raise ConfigurationError(
            f"no ladder step satisfies alpha_i <= 10^-{M} at X={X:g}; use a smaller M or a larger X"
        )
    n_blocks = len(alphas)  # 1 + index of the last admissible alpha
    alphas.append(20.0 ** (n_blocks - 1) / loglog**2)
    return alphas, n_blocks


def build_params(k: float, X: float, M: int = 1) -> MollifierParams:
    """Construct the ladder, degrees and blocks; large-X assumptions only warn."""
    if not k > 0:
        raise DomainError(f"k must be positive, got {k}")
    if not X >= 16:
        raise DomainError(f"X must be >= 16, got {X}")
    if int(M) != M or M < 1:
        raise DomainError(f"M must be a positive integer, got {M}")
    alphas, n_blocks = ladder(X, int(M))
    log_x = math.log(X)
    degrees = tuple(math.ceil(E2 * k * a**-0.75) for a in alphas[1 : n_blocks + 1])
    tops = [2.0] + [math.exp(a * log_x) for a in alphas[1 : n_blocks + 1]]
    bounds = tuple((tops[i], tops[i + 1]) for i in range(n_blocks))

    notes = []
    lll = math.log(math.log(log_x))
    if not n_blocks <= lll:
        notes.append(f"I <= log log log X fails: I={n_blocks} > {lll:.4g}")
    loglog = math.log(log_x)
    y = math.exp(log_x / loglog**2)
    recip = prime_sums(y)[1] if y >= 2 else 0.0
    if not recip <= loglog:
        notes.append(f"sum of 1/p up to X^(1/(log log X)^2) = {recip:.4g} exceeds log log X = {loglog:.4g}")
    for note in notes:
        warnings.warn(note, LadderWarning, stacklevel=2)
    return MollifierParams(float(k), float(X), int(M), tuple(alphas[: n_blocks + 1]), n_blocks, degrees, bounds, tuple(notes))


# -- truncated exponentials -----------------------------------------------------------


def e_poly_degree(K: int, x):
    """sum_{j <= K} x^j / j! by Horner; exact for Fraction input, elementwise for arrays."""
    acc = 1
    for j in range(K, 0, -1):
        acc = 1 + acc * x / j
    return acc


def e_poly(y: float, x):
    """E_y(x): the Taylor polynomial of exp(x) of even degree 2 ceil(y)."""
    if y < 0:
        raise DomainError(f"E_y needs y >= 0, got {y}")
    return e_poly_degree(2 * math.ceil(y), x)


def exp_tail(K: int, z, terms: int = 400):
    """sum_{r > K} z^r / r!, summed directly so that no cancellation occurs."""
    z = complex(z)
    term = 1.0 + 0j
    for r in range(1, K + 1):
        term *= z / r
    total = 0j
    for r in range(K + 1, K + 1 + terms):
        term *= z / r
        total += term
        if abs(term) <= 1e-18 * abs(total):
            break
    return total


def power_over_factorial(K: int, x: float) -> float:
    """|x|^K / K! through logs (K! overflows for the degrees used here)."""
    if x == 0:
        return 1.0 if K == 0 else 0.0
    return math.exp(K * math.log(abs(x)) - math.lgamma(K + 1))


# -- block sums ------------------------------------------------------------------------


def _check_primes(ps):
    ps = np.atleast_1d(np.asarray(ps, dtype=np.int64))
    if np.any(ps < 3) or np.any(ps % 2 == 0):
        raise DomainError("expected odd primes")
    return ps


def block_sums(ps, params: MollifierParams, weights=None) -> np.ndarray:
    """P_i(p) for every p and block i, shape (len(ps), I).

    ``weights`` maps a block index to per-prime coefficients replacing
    q^(-1/2); rows are reduced in increasing q.
    """
    ps = _check_primes(ps)
    out = np.zeros((len(ps), params.I))
    for i in range(1, params.I + 1):
        out[:, i - 1] = _one_block(ps, i, params, weights)
    return out


def _one_block(ps, i, params, weights=None):
    qs = params.block_primes(i)
    if len(qs) == 0:
        return np.zeros(len(ps))
    w = 1.0 / np.sqrt(qs.astype(float)) if weights is None else weights(i, qs)
    chi = kernels.chi8p_matrix(ps, qs).astype(float)
    return _row_sums(chi * w[None, :])


def _row_sums(terms):
    # sequential left-to-right accumulation: the same bits for a row whatever else is in the batch
    acc = np.zeros(terms.shape[0])
    for col in range(terms.shape[1]):
        acc = acc + terms[:, col]
    return acc


def p_block(p: int, i: int, params: MollifierParams) -> float:
    params._check_block(i)
    return float(_one_block(_check_primes([p]), i, params)[0])


def n_factors(P: np.ndarray, alpha: float, params: MollifierParams) -> np.ndarray:
    """N_i(p, alpha) from block sums P of shape (n, I)."""
    P = np.atleast_2d(P)
    out = np.empty_like(P, dtype=float)
    for i in range(1, params.I + 1):
        out[:, i - 1] = e_poly_degree(params.K(i), alpha * P[:, i - 1])
    return out


def n_factor(p: int, i: int, alpha: float, params: MollifierParams) -> float:
    params._check_block(i)
    return float(e_poly_degree(params.K(i), alpha * p_block(p, i, params)))


def n_product(p: int, alpha: float, params: MollifierParams) -> float:
    factors = n_factors(block_sums([p], params), alpha, params)[0]
    prod = 1.0
    for f in factors:
        prod *= f
    return prod


def log_n_product(P: np.ndarray, alpha: float, params: MollifierParams) -> np.ndarray:
    """log N(p, alpha) per row; the factors are positive because their degree is even."""
    return np.log(n_factors(P, alpha, params)).sum(axis=1)


# -- penalty terms ----------------------------------------------------------------------


def r_exponent(k: float) -> int:
    if not k > 0:
        raise DomainError(f"k must be positive, got {k}")
    if k == 0.5:
        raise DomainError("k = 1/2 is excluded (0 < k != 1/2)")
    if k < 0.5:
        return 3 + math.ceil(2 * (2 - 3 * k) / (1 - 2 * k))
    return 1 + math.ceil(2 * k / (2 * k - 1))


def _q_base(k, h):
    return 12.0 * max(9.0, 36.0 * k * k) / h


def log_q_factors(P: np.ndarray, k: float, params: MollifierParams) -> np.ndarray:
    """log Q_i(p, k); -inf where P_i = 0. Q_i itself routinely exceeds 1e300."""
    P = np.atleast_2d(P)
    out = np.empty_like(P, dtype=float)
    for i in range(1, params.I + 1):
        h = params.degree(i)
        with np.errstate(divide="ignore"):
            out[:, i - 1] = 2 * h * (math.log(_q_base(k, h)) + np.log(np.abs(P[:, i - 1])))
    return out


def q_factor(p: int, i: int, k: float, params: MollifierParams) -> float:
    """Q_i(p, k) = (12 max(9, 36k^2) P_i / h_i)^(2 h_i); may be inf in float."""
    h = params.degree(i)
    return (_q_base(k, h) * p_block(p, i, params)) ** (2 * h)


# -- weighted blocks and deviation classes -------------------------------------------------


def m_blocks(ps, params: MollifierParams) -> np.ndarray:
    """M_{i,j}(p) for 1 <= i <= j <= I, shape (len(ps), I, I); zero below the diagonal."""
    ps = _check_primes(ps)
    out = np.zeros((len(ps), params.I, params.I))
    for j in range(1, params.I + 1):
        lt = params.log_top(j)

        def weights(i, qs, lt=lt):
            lq = np.log(qs.astype(float))
            return np.exp(-(0.5 + 1.0 / lt) * lq) * (lt - lq) / lt

        sums = block_sums(ps, params, weights=weights)
        out[:, :j, j - 1] = sums[:, :j]
    return out


def m_block(p: int, i: int, j: int, params: MollifierParams) -> float:
    params._check_block(i)
    params._check_block(j)
    if i > j:
        raise DomainError(f"M_(i,j) needs i <= j, got i={i}, j={j}")
    return float(m_blocks([p], params)[0, i - 1, j - 1])


def classify_from_m(m: np.ndarray, alphas) -> np.ndarray:
    """Class index j in 0..I for each (I, I) matrix of M values (upper triangle used)."""
    m = np.abs(np.asarray(m, dtype=float))
    if m.ndim == 2:
        m = m[None]
    n_blocks = m.shape[1]
    thresholds = np.asarray(alphas[1 : n_blocks + 1], dtype=float) ** -0.75
    # fails[:, i] : block i+1 exceeds its threshold for some l >= i+1
    upper = np.triu(np.ones((n_blocks, n_blocks), dtype=bool))
    fails = np.any((m > thresholds[None, :, None]) & upper[None], axis=2)
    cls = np.full(m.shape[0], n_blocks, dtype=np.int64)
    first = np.argmax(fails, axis=1)  # 0-based index of first failing block
    any_fail = fails.any(axis=1)
    cls[any_fail] = first[any_fail]  # block 1 failing gives class 0, block j+1 gives class j
    return cls


def classify_classes(ps, params: MollifierParams) -> np.ndarray:
    return classify_from_m(m_blocks(ps, params), params.alphas)


def classify_class(p: int, params: MollifierParams) -> int:
    return int(classify_classes([p], params)[0])


def s0_measure_proxy(ps, params: MollifierParams, w) -> float:
    """sum_l sum_p (alpha_1^(3/4) |M_{1,l}|)^(2 ceil(1/(10 alpha_1))) W(p/X)."""
    ps = _check_primes(ps)
    a1 = params.alphas[1]
    expo = 2 * math.ceil(1 / (10 * a1))
    m = m_blocks(ps, params)[:, 0, :]
    vals = (a1**0.75 * np.abs(m)) ** expo * np.asarray(w(ps / params.X))[:, None]
    return math.fsum(vals.ravel())


# -- Dirichlet expansion -----------------------------------------------------------------------


def expansion_size(n_primes: int, K: int) -> int:
    """Number of multisets of size <= K drawn from n_primes primes."""
    return math.comb(n_primes + K, K)


def expand_dirichlet(
    i: int | None,
    alpha: float,
    params: MollifierParams | None = None,
    *,
    primes=None,
    K: int | None = None,
    budget: int = DEFAULT_EXPANSION_BUDGET,
) -> dict[int, float]:
    """Coefficients c(n) = alpha^Omega(n) / (w(n) sqrt n) of the polynomial N_i(p, alpha).

    n runs over products of at most K block primes (with multiplicity). Give
    ``primes`` and ``K`` to expand a synthetic block.
    """
    if primes is None:
        primes = params.block_primes(i)
    if K is None:
        K = params.K(i)
    primes = [int(q) for q in primes]
    size = expansion_size(len(primes), K)
    if size > budget:
        raise CapacityError(f"expansion has {size} terms, above the budget of {budget}")
    coeffs = {}
    for r in range(K + 1):
        for combo in itertools.combinations_with_replacement(primes, r):
            n = math.prod(combo)
            w = math.prod(math.factorial(combo.count(q)) for q in set(combo))
            coeffs[n] = alpha**r / (w * math.sqrt(n))
    return coeffs


def evaluate_expansion(coeffs: dict[int, float], p: int, primes) -> float:
    """sum_n c(n) chi_8p(n) for n built from ``primes`` (chi is completely multiplicative)."""
    qs = sorted(int(q) for q in primes)
    chi_q = dict(zip(qs, kernels.chi8p_matrix(np.array([p]), np.asarray(qs, dtype=np.int64))[0].tolist()))
    terms = []
    for n, c in coeffs.items():
        sign = 1
        for q in qs:
            while n % q == 0:
                n //= q
                sign *= chi_q[q]
        terms.append(sign * c)
    return math.fsum(terms)


def expansion_identity(p: int, primes, alpha: float, K: int) -> tuple[float, float]:
    """(sum_n c(n) chi_8p(n), E_K(alpha P)) for a block of the given primes."""
    coeffs = expand_dirichlet(None, alpha, primes=primes, K=K)
    qs = np.asarray(sorted(int(q) for q in primes), dtype=np.int64)
    chi = kernels.chi8p_matrix(np.array([p]), qs)[0].astype(float) if len(qs) else np.zeros(0)
    P = math.fsum(chi / np.sqrt(qs.astype(float)))
    return evaluate_expansion(coeffs, p, primes), float(e_poly_degree(K, alpha * P))


def dirichlet_length_check(params: MollifierParams) -> dict:
    """Compare the length of N with X^ceil(4 e^2 k 10^(-M/4)) in log scale."""
    log_len = 0.0
    for i in range(1, params.I + 1):
        qs = params.block_primes(i)
        if len(qs):
            log_len += params.K(i) * math.log(float(qs[-1]))
    expo = math.ceil(4 * E2 * params.k * 10 ** (-params.M / 4))
    log_bound = expo * math.log(params.X)
    return {"log_length": log_len, "log_bound": log_bound, "pass": log_len <= log_bound}


# -- factor inequality verification -------------------------------------------------------------


def check_exp_bound(K: int, a: float, z: complex, rel: float = 1e-12) -> tuple[bool, dict]:
    """|E_K(z) - e^z| <= |z|^K / K! <= (a e / 20)^K for |z| <= a K / 20."""
    if abs(z) > a * K / 20 * (1 + 1e-15):
        raise DomainError("z outside the disc |z| <= aK/20")
    lhs = abs(exp_tail(K, z))
    mid = power_over_factorial(K, abs(z))
    rhs = (a * math.e / 20) ** K
    ok = lhs <= mid * (1 + rel) and mid <= rhs * (1 + rel)
    return ok, {"K": K, "a": a, "z": [complex(z).real, complex(z).imag], "remainder": lhs, "middle": mid, "bound": rhs}


def check_e_product(K: int, x) -> tuple[bool, dict]:
    """E_K(x) E_K(-x) >= 1 and E_K(x) > 0, evaluated exactly in rationals."""
    xf = Fraction(x)
    plus = e_poly_degree(K, xf)
    minus = e_poly_degree(K, -xf)
    ok = plus > 0 and minus > 0 and plus * minus >= 1
    return ok, {"K": K, "x": float(x), "product": float(plus * minus), "E": float(plus)}


def _branch(k):
    if k < 0.5:
        return 2.0, [2 * k - 1, 2 - 2 * k]
    return 2 * k - 1, [2 * k - 1]


def _log_lhs(k, factors):
    """log of the left side of the per-block inequality."""
    if k < 0.5:
        return 2 * (2 - 3 * k) / (1 - 2 * k) * math.log(factors[2 * k - 1]) + 2 * math.log(factors[2 - 2 * k])
    return 2 * k / (2 * k - 1) * math.log(factors[2 * k - 1])


@dataclass
class FactorReport:
    p: int
    k: float
    C: float
    entries: list = field(default_factory=list)

    def add(self, block, check, passed, witness, constant=None):
        self.entries.append(
            {"block": block, "check": check, "pass": passed, "witness": witness, "constant": constant}
        )

    def passed(self, check: str | None = None) -> bool:
        return all(e["pass"] is not False for e in self.entries if check is None or e["check"] == check)

    @property
    def smallest_constant(self) -> float:
        vals = [e["constant"] for e in self.entries if e["check"] == "c" and e["constant"] is not None]
        return max(vals, default=0.0)

    def to_json(self) -> str:
        return json.dumps(self.entries, sort_keys=True, allow_nan=True)


def verify_factor_inequalities(p: int, k: float, params: MollifierParams, C: float = 10.0, P=None) -> FactorReport:
    """Check the exact per-block inequalities behind the mollifier bounds.

    (a) the truncated-exponential bound whenever alpha P_i lies in its disc;
    (b) the penalty chain N_i <= sum |alpha P|^r / r! <= (12 (a'+1)^2 |P| / h)^(2h)
        when |P_i| >= h / (10 (1 + a')); the middle link of the printed chain is
        reported as "b-middle" and not part of the verdict;
    (c) LHS <= N_i(p, 2k) (1 + C e^(-h)) + Q_i^(r_k) with the supplied C, also
        recording the smallest constant that would pass;
    (d) E_K(x) E_K(-x) >= 1 and E_K(x) > 0 at x = +-P_i.
    """
    r = r_exponent(k)
    if P is None:
        P = block_sums([p], params)[0]
    report = FactorReport(int(p), float(k), float(C))
    a_prime, branch_alphas = _branch(k)
    for i in range(1, params.I + 1):
        h = params.degree(i)
        K = 2 * h
        Pi = float(P[i - 1])
        factors = {a: float(e_poly_degree(K, a * Pi)) for a in set(branch_alphas) | {2 * k}}

        for a in branch_alphas:
            z = a * Pi
            amp = min(abs(a), 2.0)
            if amp > 0 and abs(z) <= amp * K / 20:
                ok, wit = check_exp_bound(K, amp, z)
                report.add(i, "a", ok, wit | {"alpha": a})

        threshold = h / (10 * (1 + a_prime))
        if abs(Pi) >= threshold:
            for a in branch_alphas:
                n_val = factors[a]
                abs_series = float(e_poly_degree(K, abs(a * Pi)))
                log_outer = K * math.log(12 * (a_prime + 1) ** 2 * abs(Pi) / h)
                log_middle = K * math.log(abs((a_prime + 1) * Pi)) + math.log(
                    math.fsum((10 * (1 + a_prime) / K) ** (h - j) / math.factorial(j) for j in range(K + 1))
                )
                ok = n_val <= abs_series * (1 + 1e-12) and math.log(abs_series) <= log_outer + 1e-12
                wit = {"alpha": a, "P": Pi, "N": n_val, "abs_series": abs_series, "log_bound": log_outer}
                report.add(i, "b", ok, wit)
                report.add(i, "b-middle", None, wit | {"log_middle": log_middle, "holds": math.log(abs_series) <= log_middle + 1e-12})

        log_l = _log_lhs(k, factors)
        log_n2k = math.log(factors[2 * k])
        log_qr = r * K * (math.log(_q_base(k, h)) + math.log(abs(Pi))) if Pi else -math.inf
        log_rhs = float(np.logaddexp(log_n2k + math.log1p(C * math.exp(-h)), log_qr))
        c_min = _smallest_c(log_l, log_n2k, log_qr, h)
        report.add(
            i, "c", log_l <= log_rhs + 1e-9,
            {"log_lhs": log_l, "log_rhs": log_rhs, "log_N2k": log_n2k, "log_Qr": log_qr, "h": h},
            c_min,
        )

        ok, wit = check_e_product(K, Pi)
        report.add(i, "d", ok, wit)
    return report


def _smallest_c(log_l, log_n2k, log_qr, h):
    if log_qr >= log_l:
        return 0.0
    excess = math.exp(log_l - log_n2k) * -math.expm1(log_qr - log_l) - 1.0
    return max(0.0, excess * math.exp(h))


def e_product_grid(K_max: int = 40, x_max: float = 50.0, step: float = 0.5):
    """Exact E_K(x) E_K(-x) >= 1 and E_K(x) > 0 over even K <= K_max and a rational x grid."""
    failures = []
    count = 0
    xs = [Fraction(j) * Fraction(step) for j in range(-int(x_max / step), int(x_max / step) + 1)]
    for K in range(0, K_max + 1, 2):
        for x in xs:
            ok, wit = check_e_product(K, x)
            count += 1
            if not ok:
                failures.append(wit)
    return count, failures


def exp_bound_grid(Ks=range(2, 41), amps=(0.5, 1.0, 2.0), angles: int = 16):
    """Bound (a) on the circle |z| = aK/20 and on the real segment inside it."""
    failures = []
    count = 0
    for K in Ks:
        for a in amps:
            radius = a * K / 20
            pts = [radius * complex(math.cos(t), math.sin(t)) for t in np.linspace(0, 2 * math.pi, angles, endpoint=False)]
            pts += [radius * f for f in (-1.0, -0.5, 0.25, 0.5, 1.0)]
            for z in pts:
                ok, wit = check_exp_bound(K, a, z)
                count += 1
                if not ok:
                    failures.append(wit)
    return count, failures
