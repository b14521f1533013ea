import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from isac_slp import oracles
from isac_slp.statkit import (
    BracketError,
    ConvergenceError,
    DomainError,
    bisect,
    chi2_2_cdf,
    chi2_2_inv_cdf,
    marcum_q1,
    noncentral_chi2_2_cdf,
)

# frozen from the Rician-density quadrature and Bessel series oracles
Q1_AT_1_1 = 0.7328798037968203
NCX2_CDF_4_4 = 0.39649903938800657


class TestChi2:
    def test_closed_form_points(self):
        assert chi2_2_cdf(0.0) == 0.0
        assert chi2_2_cdf(2 * math.log(10)) == pytest.approx(0.9, abs=1e-15)
        assert chi2_2_cdf(1.0) == pytest.approx(1 - math.exp(-0.5), rel=1e-15)

    def test_inverse_points(self):
        assert chi2_2_inv_cdf(0.0) == 0.0
        assert chi2_2_inv_cdf(0.9) == pytest.approx(4.605170185988091, rel=1e-14)
        assert chi2_2_inv_cdf(0.99) == pytest.approx(9.210340371976182, rel=1e-14)

    @pytest.mark.parametrize("bad", [-1e-12, -3.0, math.inf, math.nan])
    def test_cdf_domain(self, bad):
        with pytest.raises(DomainError):
            chi2_2_cdf(bad)

    @pytest.mark.parametrize("bad", [1.0, 1.5, -0.1])
    def test_inverse_domain(self, bad):
        with pytest.raises(DomainError):
            chi2_2_inv_cdf(bad)

    @given(st.floats(1e-6, 30.0))
    def test_round_trip(self, x):
        assert chi2_2_inv_cdf(chi2_2_cdf(x)) == pytest.approx(x, rel=1e-10)

    @given(st.floats(30.0, 50.0))
    def test_round_trip_tail(self, x):
        # p = 1 - exp(-x/2) holds only ~x/(2 ln 10) fewer digits of the tail
        # mass, so the best attainable relative error is ~2 eps e^{x/2} / x
        bound = 4 * np.finfo(float).eps * math.exp(x / 2) / x
        assert abs(chi2_2_inv_cdf(chi2_2_cdf(x)) - x) <= bound * x

    def test_matches_scipy(self):
        xs = np.linspace(0, 40, 81)
        np.testing.assert_allclose([chi2_2_cdf(x) for x in xs], stats.chi2.cdf(xs, 2),
                                   rtol=1e-13, atol=1e-15)


class TestMarcum:
    def test_special_cases(self):
        assert marcum_q1(0.0, 3.0) == pytest.approx(math.exp(-4.5), rel=1e-13)
        assert marcum_q1(5.0, 0.0) == 1.0

    def test_pinned_value(self):
        assert marcum_q1(1.0, 1.0) == pytest.approx(Q1_AT_1_1, abs=1e-12)

    def test_oracles_agree_with_each_other(self):
        assert oracles.marcum_q1_quadrature(1, 1) == pytest.approx(
            oracles.marcum_q1_bessel(1, 1), abs=1e-12)

    def test_grid_vs_quadrature(self):
        for a in np.linspace(0, 12, 13):
            for b in np.linspace(0.1, 14, 15):
                assert abs(marcum_q1(a, b) - oracles.marcum_q1_quadrature(a, b)) <= 1e-10

    def test_wide_range_vs_scipy(self):
        # survivor function of the noncentral law, up to a, b = 60
        for a in (0.5, 5.0, 20.0, 40.0, 60.0):
            for b in (0.5, 5.0, 20.0, 40.0, 60.0):
                ref = stats.ncx2.sf(b * b, 2, a * a)
                assert abs(marcum_q1(a, b) - ref) <= 1e-10

    def test_large_arguments(self):
        # deep in the tail and near 1 without overflow
        assert marcum_q1(1.0, 60.0) < 1e-300
        assert marcum_q1(60.0, 1.0) == 1.0
        assert marcum_q1(100.0, 100.0) == pytest.approx(stats.ncx2.sf(1e4, 2, 1e4), abs=1e-10)

    def test_monotone_on_grid(self):
        grid = np.linspace(0, 8, 17)
        Q = np.array([[marcum_q1(a, b) for b in grid] for a in grid])
        assert np.all(np.diff(Q, axis=1) <= 1e-15)  # nonincreasing in b
        assert np.all(np.diff(Q, axis=0) >= -1e-15)  # nondecreasing in a

    @pytest.mark.parametrize("args", [(-1.0, 1.0), (1.0, -1.0), (math.nan, 1.0), (1.0, math.inf)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            marcum_q1(*args)

    @given(st.floats(0, 30), st.floats(0, 30))
    def test_is_probability(self, a, b):
        assert 0.0 <= marcum_q1(a, b) <= 1.0


class TestNoncentral:
    def test_reduces_to_central(self):
        assert noncentral_chi2_2_cdf(4.60517, 0.0) == pytest.approx(0.9, abs=1e-6)
        for x in np.linspace(0, 30, 31):
            assert noncentral_chi2_2_cdf(x, 0.0) == chi2_2_cdf(x)

    def test_origin(self):
        for rho in (0.0, 0.5, 10.0, 400.0):
            assert noncentral_chi2_2_cdf(0.0, rho) == 0.0

    def test_pinned_value(self):
        assert noncentral_chi2_2_cdf(4.0, 4.0) == pytest.approx(NCX2_CDF_4_4, abs=1e-12)

    def test_series_oracle(self):
        for x in (0.3, 2.0, 7.0, 25.0):
            for rho in (0.1, 1.0, 9.0, 50.0):
                assert noncentral_chi2_2_cdf(x, rho) == pytest.approx(
                    oracles.ncx2_2_cdf_series(x, rho), abs=1e-12)

    def test_decreasing_in_rho(self):
        for x in (0.5, 4.0, 12.0):
            vals = [noncentral_chi2_2_cdf(x, r) for r in np.linspace(0, 40, 41)]
            assert np.all(np.diff(vals) <= 1e-15)

    def test_domain(self):
        with pytest.raises(DomainError):
            noncentral_chi2_2_cdf(-1.0, 1.0)
        with pytest.raises(DomainError):
            noncentral_chi2_2_cdf(1.0, -1.0)


class TestBisect:
    def test_linear(self):
        assert bisect(lambda x: x - 2.0, 0.0, 10.0, tol=1e-12) == pytest.approx(2.0, abs=1e-11)

    def test_sqrt2(self):
        assert bisect(lambda x: x * x - 2.0, 0.0, 2.0, tol=1e-12) == pytest.approx(
            math.sqrt(2.0), abs=1e-11)

    def test_expands_upper_bracket(self):
        # decreasing function with its root far beyond hi=1
        root = bisect(lambda t: 1000.0 / (1.0 + t) - 1.0, 0.0, 1.0, tol=1e-12, xtol=1e-14)
        assert root == pytest.approx(999.0, rel=1e-10)

    def test_exact_endpoint(self):
        assert bisect(lambda x: x, 0.0, 1.0) == 0.0

    def test_no_sign_change(self):
        with pytest.raises(BracketError):
            bisect(lambda x: x * x + 1.0, 0.0, 1.0, hi_cap=1e6)

    def test_iteration_cap_carries_best(self):
        with pytest.raises(ConvergenceError) as info:
            bisect(lambda x: x - math.pi, 0.0, 10.0, tol=0.0, xtol=0.0, max_iter=5)
        assert abs(info.value.best - math.pi) < 1.0

    def test_k_section_matches_bisection(self):
        f = lambda x: x**3 - 5.0  # noqa: E731
        r1 = bisect(f, 0.0, 4.0, tol=1e-13, xtol=0.0)
        r2 = bisect(lambda v: np.asarray(v) ** 3 - 5.0, 0.0, 4.0, tol=1e-13, xtol=0.0, points=15)
        assert r1 == pytest.approx(5 ** (1 / 3), abs=1e-12)
        assert r2 == pytest.approx(5 ** (1 / 3), abs=1e-12)

    @given(st.floats(-50, 50), st.integers(1, 3), st.floats(0.1, 10))
    def test_monotone_polynomials(self, root, power, scale):
        f = lambda x: scale * (x - root) ** (2 * power - 1)  # noqa: E731
        got = bisect(f, -100.0, 100.0, tol=1e-10, xtol=1e-10)
        assert abs(f(got)) <= 1e-10 or abs(got - root) <= 1e-10 * max(1.0, abs(got)) * 2

    def test_deterministic(self):
        f = lambda x: math.tanh(x - 0.3)  # noqa: E731
        assert bisect(f, -2.0, 2.0) == bisect(f, -2.0, 2.0)
