import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy import special as sps

from qml import special as sp
from qml.errors import AccuracyError, DomainError

T_GRID = [0.01, 0.1, 1.0, 3.0, 10.0]
PHI_HAT_1 = 1.5
PHI_HAT_0 = 1.104007913290612


class TestIncompleteGamma:
    def test_at_zero(self):
        assert sp.incomplete_gamma_reg(0.25, 0.0) == 1.0

    def test_exponential(self):
        assert sp.incomplete_gamma_reg(1.0, 1.0) == pytest.approx(math.exp(-1), abs=1e-15)

    def test_quarter_against_quadrature(self):
        val, _ = integrate.quad(lambda u: math.exp(-u) * u**-0.75, 1, np.inf, epsabs=1e-14, epsrel=1e-13)
        assert sp.incomplete_gamma_reg(0.25, 1.0) == pytest.approx(val / math.gamma(0.25), abs=1e-13)

    @given(st.floats(0.05, 20), st.floats(0, 60))
    def test_matches_scipy(self, a, x):
        assert sp.incomplete_gamma_reg(a, x) == pytest.approx(sps.gammaincc(a, x), abs=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            sp.incomplete_gamma_reg(0.0, 1.0)
        with pytest.raises(DomainError):
            sp.incomplete_gamma_reg(1.0, -1.0)


def test_gamma_quarter_reflection():
    assert sp.check_gamma_quarter() <= 1e-13
    assert sp.GAMMA_QUARTER * math.gamma(0.75) == pytest.approx(math.pi * math.sqrt(2), abs=1e-13)


class TestVKernel:
    @pytest.mark.parametrize("t", T_GRID)
    def test_closed_form_vs_contour(self, t):
        assert abs(sp.v_kernel(t) - sp.v_kernel(t, "contour")) <= 1e-10

    @pytest.mark.parametrize("t", [1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0])
    def test_three_methods(self, t):
        ref = sp.v_kernel(t)
        assert abs(sp.v_kernel(t, "contour") - ref) <= 1e-10
        assert abs(sp.v_kernel(t, "series") - ref) <= 1e-10

    def test_small_t(self):
        v = sp.v_kernel(1e-4)
        assert 0.98 <= v <= 1.0

    def test_large_t(self):
        assert sp.v_kernel(10.0) <= 1e-15

    def test_decreasing(self):
        ts = np.geomspace(1e-3, 8, 200)
        vals = [sp.v_kernel(t) for t in ts]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert all(0 < v < 1 for v in vals)

    @pytest.mark.parametrize("t", np.linspace(0.1, 5, 12))
    def test_derivative(self, t):
        h = 1e-5 * t
        fd = (sp.v_kernel(t + h) - sp.v_kernel(t - h)) / (2 * h)
        assert fd == pytest.approx(sp.v_kernel_derivative(t), rel=1e-6)

    def test_upper_bound(self):
        ts = np.linspace(0.5, 10, 50)
        assert all(sp.v_kernel(t) <= sp.v_upper_bound(t) for t in ts)

    def test_domain(self):
        with pytest.raises(DomainError):
            sp.v_kernel(0.0)
        with pytest.raises(DomainError):
            sp.v_kernel(1.0, "nope")

    def test_contour_reports_failure(self):
        with pytest.raises(AccuracyError):
            sp.v_contour(1.0, tol=1e-30)


class TestWeights:
    def test_phi_values(self):
        assert sp.PHI(1.5) == 1.0
        assert sp.PHI(0.4) == 0.0
        assert sp.PHI(0.75) == pytest.approx(0.5, abs=1e-15)
        assert sp.PHI(2.25) == pytest.approx(0.5, abs=1e-15)
        assert sp.PHI(1.0) == 1.0 and sp.PHI(2.0) == 1.0 and sp.PHI(2.6) == 0.0

    def test_phi_range(self):
        xs = np.linspace(0, 3, 3001)
        vals = sp.PHI(xs)
        assert np.all((vals >= 0) & (vals <= 1))
        assert np.all(vals[(xs < 0.5) | (xs > 2.5)] == 0)
        assert np.all(vals[(xs >= 1) & (xs <= 2)] == 1)

    def test_window(self):
        w = sp.window_w(0.1)
        xs = np.linspace(0, 1.5, 1501)
        vals = w(xs)
        assert np.all(vals >= 0)
        assert np.all(vals[(xs >= 0.5) & (xs <= 1.0)] >= 1)
        assert np.all(vals[(xs <= 0.4) | (xs >= 1.1)] == 0)

    def test_window_width_domain(self):
        with pytest.raises(DomainError):
            sp.window_w(0.6)

    @given(st.floats(0, 1))
    def test_step_symmetry(self, t):
        assert sp.smooth_step(t) + sp.smooth_step(1 - t) == pytest.approx(1.0, abs=1e-15)


class TestMellin:
    def test_phi_hat_one(self):
        val = sp.mellin(sp.PHI, 1)
        assert 1 <= val.real <= 2
        assert val.real == pytest.approx(PHI_HAT_1, abs=1e-12)

    def test_phi_hat_zero(self):
        assert math.isfinite(sp.mellin(sp.PHI, 0).real)
        assert sp.mellin(sp.PHI, 0).real == pytest.approx(PHI_HAT_0, abs=1e-10)

    @pytest.mark.parametrize("s", [0, 1, 0.5 + 2j, 2 - 7j, -1 + 0.3j])
    def test_two_rules_agree(self, s):
        a = sp.mellin(sp.PHI, s)
        b = sp.mellin_fixed(sp.PHI, s)[0]
        assert abs(a - b) <= 1e-10 * max(1, abs(a))

    def test_inverse_roundtrip(self):
        xs = np.array([0.75, 1.5, 2.25])
        assert np.max(np.abs(sp.mellin_inverse(sp.PHI, xs) - sp.PHI(xs))) <= 1e-6

    def test_exact_plateau_part(self):
        # Mellin transform of the indicator of [1, 2] at s = 2 is 3/2
        assert complex(sp._segment_power_integral(1.0, 2.0, 2.0)) == pytest.approx(1.5)


class TestHurwitz:
    def test_zeta_half(self):
        a = sp.hurwitz_zeta(0.5, 1.0)
        b = sp.hurwitz_zeta(0.5, 1.0, shift=60)
        assert abs(a - b) <= 1e-10
        assert a == pytest.approx(-1.4603545088095868, abs=1e-12)

    @pytest.mark.parametrize("s", [2.0, 3.0, 0.5, -0.5 + 0j, 1.25 + 0.5j])
    def test_against_mpmath(self, s):
        import mpmath

        for x in (0.01, 0.3, 1.0, 7.5):
            ref = complex(mpmath.zeta(s, x))
            assert abs(complex(sp.hurwitz_zeta(s, x)) - ref) <= 1e-11 * max(1, abs(ref))

    def test_vectorized(self):
        xs = np.linspace(0.01, 1, 50)
        vals = sp.hurwitz_zeta(0.5, xs)
        assert vals.shape == xs.shape
        assert np.allclose(vals, [sp.hurwitz_zeta(0.5, float(x)) for x in xs], atol=1e-13)

    def test_bernoulli(self):
        b = sp._bernoulli_even(4)
        assert list(b) == [Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30)]
