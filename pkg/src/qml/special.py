"""Special functions: the AFE weight V, incomplete gamma, smooth weights, Mellin
transforms and an Euler-Maclaurin Hurwitz zeta.

The weight V(t) is available three ways. The closed form

    V(t) = Q(1/4, pi t^2 / 8)

follows from int_0^inf Gamma(a, u) u^{w-1} du = Gamma(w + a) / w with the
substitution s = 2w, u = pi t^2 / 8; the contour and residue-series routes
exist to check it.
"""

from __future__ import annotations

import cmath
import math
import sys
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import integrate, special as sps

from qml.errors import AccuracyError, DomainError

GAMMA_QUARTER = math.gamma(0.25)
LOG_GAMMA_QUARTER = math.lgamma(0.25)
V_SCALE = math.pi / 8.0  # u = V_SCALE * t**2

_ITMAX = 500
_EPS = 1e-16
_TINY = 1e-300


def check_gamma_quarter(tol: float = 1e-13) -> float:
    """Return |Gamma(1/4) Gamma(3/4) - pi sqrt 2|; raises if it exceeds ``tol``."""
    err = abs(GAMMA_QUARTER * math.gamma(0.75) - math.pi * math.sqrt(2.0))
    if err > tol:
        raise AccuracyError(f"Gamma(1/4) failed the reflection check ({err:.3g})")
    return err


# -- incomplete gamma -------------------------------------------------------


def _gamma_series(a, x):
    """Lower regularized P(a, x) by its power series; good for x < a + 1."""
    ap = a
    term = total = 1.0 / a
    for _ in range(_ITMAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise AccuracyError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf(a, x):
    """Upper regularized Q(a, x) by modified Lentz continued fraction; x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _ITMAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise AccuracyError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def incomplete_gamma_reg(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if not a > 0:
        raise DomainError(f"incomplete gamma needs a > 0, got {a}")
    if not x >= 0:
        raise DomainError(f"incomplete gamma needs x >= 0, got {x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


# -- the AFE weight V -------------------------------------------------------


def v_closed_form(t: float) -> float:
    return incomplete_gamma_reg(0.25, V_SCALE * t * t)


def _contour_integrand(tau, t, sigma):
    s = sigma + 1j * tau
    logval = (
        0.5 * s * math.log(8.0 / math.pi)
        + sps.loggamma(0.5 * s + 0.25)
        - LOG_GAMMA_QUARTER
        - s * math.log(t)
        - np.log(s)
    )
    return np.exp(logval).real


def _contour_cutoff(t, sigma, tol):
    # |integrand| <= exp(sigma/2 log(8/pi) + Re loggamma - ... ) decays like exp(-pi tau / 4)
    tau = 8.0
    while True:
        s = sigma + 1j * tau
        mag = math.exp(
            0.5 * sigma * math.log(8.0 / math.pi)
            + sps.loggamma(0.5 * s + 0.25).real
            - LOG_GAMMA_QUARTER
            - sigma * math.log(t)
        ) / abs(s)
        # the tail beyond tau is bounded by mag / (pi/4 - 1/tau)
        if mag * 8.0 / math.pi < tol:
            return tau
        tau += 4.0


@lru_cache(maxsize=8)
def _gauss_legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _panel_quad(f, lo, hi, panels, order):
    x, w = _gauss_legendre(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return math.fsum(weights * f(nodes))


def v_contour(t: float, sigma: float = 2.0, tol: float = 1e-13) -> float:
    """V(t) from the truncated vertical-line integral at Re(s) = sigma.

    The integrand is conjugate-symmetric in Im(s), so only tau >= 0 is
    integrated. Two Gauss-Legendre rules of different order provide the error
    estimate.
    """
    if tol < 16.0 * sys.float_info.epsilon:
        raise AccuracyError(f"tolerance {tol:.3g} is below double-precision resolution")
    cutoff = _contour_cutoff(t, sigma, tol)
    freq = abs(math.log(t)) + 0.5 * math.log(8.0 / math.pi) + 1.0
    panels = max(16, int(math.ceil(cutoff * freq / 2.0)))

    def f(tau):
        return _contour_integrand(tau, t, sigma)

    coarse = _panel_quad(f, 0.0, cutoff, panels, 16)
    fine = _panel_quad(f, 0.0, cutoff, panels, 24)
    scale = math.exp(0.5 * sigma * math.log(8.0 / math.pi) - sigma * math.log(t))
    if abs(fine - coarse) > max(100.0 * tol, 1e-14 * scale):
        raise AccuracyError(
            f"contour quadrature for V({t}) failed its error estimate "
            f"({abs(fine - coarse):.3g})"
        )
    return fine / math.pi


def v_series(t: float) -> float:
    """V(t) as 1 plus the residues at s = -1/2 - 2m, summed in extended precision.

    The residue at s = -1/2 - 2m is -(-1)^m u^(m+1/4) / (m! (m+1/4) Gamma(1/4))
    with u = pi t^2 / 8. The series is alternating with terms as large as
    e^u, so the sum is carried out in decimal arithmetic.
    """
    u = V_SCALE * t * t
    digits = 34 + int(u / math.log(10.0))
    with localcontext() as ctx:
        ctx.prec = digits
        du = Decimal(u)
        power = Decimal(1)
        fact = Decimal(1)
        quarter = Decimal(1) / 4
        total = Decimal(0)
        tol = Decimal(10) ** (-digits + 2)
        m = 0
        while True:
            term = power / (fact * (m + quarter))
            total += term if m % 2 == 0 else -term
            m += 1
            power *= du
            fact *= m
            if m > u and term < tol:
                break
        head = du.sqrt().sqrt() * total
    return 1.0 - float(head) / GAMMA_QUARTER


_V_METHODS = {"closed_form": v_closed_form, "contour": v_contour, "series": v_series}


def v_kernel(t: float, method: str = "closed_form") -> float:
    """The AFE weight V(t) for t > 0."""
    if not t > 0:
        raise DomainError(f"V(t) needs t > 0, got {t}")
    try:
        fn = _V_METHODS[method]
    except KeyError:
        raise DomainError(f"unknown V method {method!r}") from None
    return fn(float(t))


def v_kernel_derivative(t: float) -> float:
    """dV/dt = -(pi t / 4) u^(-3/4) e^(-u) / Gamma(1/4), u = pi t^2 / 8."""
    u = V_SCALE * t * t
    return -(math.pi * t / 4.0) * math.exp(-0.75 * math.log(u) - u - LOG_GAMMA_QUARTER)


def v_upper_bound(t):
    """V(t) <= u^(-3/4) e^(-u) / Gamma(1/4), from Gamma(a, u) <= u^(a-1) e^(-u) for a < 1."""
    u = V_SCALE * np.asarray(t, dtype=float) ** 2
    return np.exp(-0.75 * np.log(u) - u - LOG_GAMMA_QUARTER)


# -- smooth weights -------------------------------------------------------------


def smooth_step(t):
    """g(t) = s(t) / (s(t) + s(1 - t)) with s(t) = exp(-1/t); 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    with np.errstate(over="ignore", divide="ignore"):
        out[inside] = sps.expit(1.0 / (1.0 - ti) - 1.0 / ti)
    return out


@dataclass(frozen=True)
class SmoothWeight:
    """A plateau bump: rises on [a, b], equals 1 on [b, c], falls on [c, d].

    ``plateau_phi`` has support [1/2, 5/2] and plateau [1, 2]; ``window_w``
    has support (1/2 - eps1, 1 + eps1) and plateau [1/2, 1].
    """

    kind: str
    transition_width: float
    _mellin_cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.kind not in ("plateau_phi", "window_w"):
            raise DomainError(f"unknown weight kind {self.kind!r}")
        if self.kind == "window_w" and not 0 < self.transition_width < 0.5:
            raise DomainError("window width eps1 must lie in (0, 1/2)")

    @property
    def knots(self) -> tuple[float, float, float, float]:
        h = self.transition_width
        if self.kind == "plateau_phi":
            return (1.0 - h, 1.0, 2.0, 2.0 + h)
        return (0.5 - h, 0.5, 1.0, 1.0 + h)

    @property
    def support(self) -> tuple[float, float]:
        a, _, _, d = self.knots
        return a, d

    def __call__(self, x):
        return weight(self, x)


PHI = SmoothWeight("plateau_phi", 0.5)


def window_w(eps1: float = 0.1) -> SmoothWeight:
    return SmoothWeight("window_w", eps1)


def weight(w: SmoothWeight, x):
    """Evaluate the weight; scalar in, scalar out."""
    a, b, c, d = w.knots
    xa = np.asarray(x, dtype=float)
    rise = smooth_step((xa - a) / (b - a))
    fall = smooth_step((d - xa) / (d - c))
    out = np.minimum(rise, fall)
    return float(out) if out.ndim == 0 else out


def _segment_power_integral(lo, hi, s):
    """int_lo^hi x^(s-1) dx, stable near s = 0."""
    s = np.asarray(s, dtype=complex)
    span = math.log(hi / lo)
    small = np.abs(s) < 1e-8
    safe = np.where(small, 1.0, s)
    val = np.exp(s * math.log(lo)) * np.expm1(s * span) / safe
    return np.where(small, span + 0.5 * s * (math.log(hi) ** 2 - math.log(lo) ** 2), val)


def _mellin_quad(w, s):
    a, b, c, d = w.knots
    plateau = complex(_segment_power_integral(b, c, s))
    total = plateau
    opts = dict(epsabs=1e-15, epsrel=1e-13, limit=400)
    for lo, hi in ((a, b), (c, d)):
        def f(x):
            return weight(w, x) * cmath.exp((s - 1.0) * math.log(x))

        re, re_err = integrate.quad(lambda x: f(x).real, lo, hi, **opts)
        im, im_err = integrate.quad(lambda x: f(x).imag, lo, hi, **opts)
        if max(re_err, im_err) > 1e-10 * max(abs(plateau), 1e-3):
            raise AccuracyError(f"Mellin quadrature at s={s} reported error {max(re_err, im_err):.3g}")
        total += complex(re, im)
    return total


def mellin(w: SmoothWeight, s: complex) -> complex:
    """Mellin transform int_0^inf w(x) x^(s-1) dx by adaptive quadrature (cached)."""
    s = complex(s)
    cache = w._mellin_cache
    if s not in cache:
        cache[s] = _mellin_quad(w, s)
    return cache[s]


def mellin_fixed(w: SmoothWeight, s, order: int = 32, panels: int | None = None):
    """Vectorized Mellin transform using composite Gauss-Legendre on each transition.

    Independent of :func:`mellin`; accurate to ~1e-13 provided ``panels``
    resolves the oscillation of x^(i Im s).
    """
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    a, b, c, d = w.knots
    if panels is None:
        span = max(math.log(b / a), math.log(d / c))
        panels = 8 + int(np.max(np.abs(s.imag)) * span / 4.0)
    x, wts = _gauss_legendre(order)
    total = _segment_power_integral(b, c, s)
    for lo, hi in ((a, b), (c, d)):
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        nw = (half[:, None] * wts[None, :]).ravel() * weight(w, nodes) / nodes
        logs = np.log(nodes)
        for start in range(0, len(s), 512):
            chunk = s[start : start + 512]
            total[start : start + 512] += np.exp(np.outer(chunk, logs)) @ nw
    return total


def mellin_inverse(w: SmoothWeight, x, sigma: float = 1.0, height: float = 400.0, step: float = 0.05):
    """Reconstruct w(x) from its Mellin transform on Re(s) = sigma, |Im s| <= height."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tau = np.arange(0.0, height + step / 2, step)
    vals = mellin_fixed(w, sigma + 1j * tau)
    trap = np.full(len(tau), step)
    trap[0] = trap[-1] = step / 2
    kernel = np.exp(-np.outer(np.log(x), sigma + 1j * tau))
    return (kernel @ (trap * vals)).real / math.pi


# -- Hurwitz zeta -----------------------------------------------------------------


@lru_cache(maxsize=1)
def _bernoulli_even(count):
    """B_2, B_4, ..., B_{2 count} as exact fractions (Akiyama-Tanigawa)."""
    n_max = 2 * count
    a = [Fraction(0)] * (n_max + 1)
    out = []
    for m in range(n_max + 1):
        a[m] = Fraction(1, m + 1)
        for j in range(m, 0, -1):
            a[j - 1] = j * (a[j - 1] - a[j])
        if m >= 2 and m % 2 == 0:
            out.append(a[0])
    return out


def _em_coefficients(terms):
    bern = _bernoulli_even(terms + 1)
    return [float(bern[j - 1] / math.factorial(2 * j)) for j in range(1, terms + 2)]


def _em_remainder_bound(s, y, terms):
    coef = _em_coefficients(terms)[terms]
    rising = 1.0
    for i in range(2 * terms + 1):
        rising *= abs(s + i)
    sigma = s.real if isinstance(s, complex) else s
    return abs(coef) * rising * y ** (-sigma - 2 * terms - 1) * abs(s + 2 * terms + 1) / (sigma + 2 * terms + 1)


def hurwitz_shift(s: complex, xmin: float, terms: int = 12, tol: float = 1e-13) -> int:
    """Smallest shift M whose Euler-Maclaurin remainder bound is below ``tol``."""
    m = 1
    while _em_remainder_bound(complex(s), m + xmin, terms) > tol:
        m += 1
        if m > 10**6:
            raise AccuracyError(f"no Euler-Maclaurin shift reaches {tol} at s={s}")
    return m


def hurwitz_zeta(s, x, shift: int | None = None, terms: int = 12):
    """zeta(s, x) = sum_{n>=0} (n + x)^(-s) by Euler-Maclaurin, vectorized over s and x.

    Requires Re(s) > -2*terms and s != 1; ``terms`` Bernoulli corrections are
    applied after summing the first ``shift`` terms directly.
    """
    s_arr = np.asarray(s)
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise DomainError("Hurwitz zeta needs x > 0")
    is_complex = np.iscomplexobj(s_arr)
    s_c = s_arr.astype(complex)
    if shift is None:
        xmin = float(np.min(x_arr))
        shift = max(hurwitz_shift(complex(z), xmin, terms) for z in np.unique(s_c))
    s_b, x_b = np.broadcast_arrays(s_c, x_arr)
    direct = np.zeros(s_b.shape, dtype=complex)
    for n in range(shift):
        direct += np.exp(-s_b * np.log(n + x_b))
    y = shift + x_b
    logy = np.log(y)
    ypow = np.exp(-s_b * logy)  # y^-s
    tail = y * ypow / (s_b - 1.0) + 0.5 * ypow
    rising = s_b.copy()
    ypow = ypow / y
    coefs = _em_coefficients(terms)
    for j in range(1, terms + 1):
        tail += coefs[j - 1] * rising * ypow
        rising = rising * (s_b + 2 * j - 1) * (s_b + 2 * j)
        ypow = ypow / (y * y)
    out = direct + tail
    if not is_complex:
        out = out.real
    return out if out.ndim else out[()]


def riemann_zeta(s, shift: int | None = None):
    return hurwitz_zeta(s, 1.0, shift=shift)
