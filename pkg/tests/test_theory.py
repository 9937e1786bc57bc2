import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from taildep.alpha import solve_alpha
from taildep.exceptions import DomainError
from taildep.model import EllipticalModel, GaussianChi, KotzTypeIII, equicorrelation
from taildep.oracle import marginal_isf_log, marginal_survival, s_tilde
from taildep.theory import (
    bivariate_index,
    gaussian_expansion,
    kotz_b_of_u,
    kotz_marginal_tail,
    limit_S,
    log_gaussian_expansion,
    log_kotz_closed_expansion,
    partial_index,
    stilde_expansion,
)

from conftest import correlations

GAUSS_KOTZ = KotzTypeIII(1.0, 0.0, 0.5, 2.0)
EXPO = KotzTypeIII(1.0, 0.0, 1.0, 1.0)


class TestBivariate:
    def test_gaussian(self):
        b = bivariate_index(0.0, 2.0)
        assert b.eta == pytest.approx(0.5, rel=1e-15)
        assert b.alpha_rho == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_theta_one(self):
        assert_allclose(bivariate_index(0.5, 1.0).eta, math.sqrt(0.75), rtol=1e-15)

    @pytest.mark.parametrize("rho", [-0.7, 0.0, 0.8])
    def test_theta_zero(self, rho):
        assert bivariate_index(rho, 0.0).eta == 1.0

    @settings(max_examples=200)
    @given(st.floats(-0.999, 0.999), st.floats(0.0, 6.0))
    def test_invariants(self, rho, theta):
        b = bivariate_index(rho, theta)
        assert b.alpha_rho > 1
        assert 0 < b.eta <= 1
        assert_allclose(b.eta, b.alpha_rho ** (-theta), rtol=1e-13)
        assert_allclose(b.alpha_rho * b.lambda_rho, 2.0, rtol=1e-14)

    @pytest.mark.parametrize("rho,theta", [(1.0, 1.0), (-1.0, 1.0), (0.3, -0.1)])
    def test_domain(self, rho, theta):
        with pytest.raises(DomainError):
            bivariate_index(rho, theta)

    def test_monotone(self):
        rhos = np.linspace(-0.9, 0.9, 25)
        thetas = np.linspace(0.25, 4.0, 16)
        grid = np.array([[bivariate_index(r, t).eta for t in thetas] for r in rhos])
        assert np.all(np.diff(grid, axis=0) > 0)  # increasing in rho
        assert np.all(np.diff(grid, axis=1) < 0)  # increasing in 1/theta


class TestLimit:
    def test_examples(self):
        assert limit_S(1.0, 1.0, 0.37) == 1.0
        assert limit_S(4.0, 1.0, 0.5) == pytest.approx(4.0, rel=1e-15)

    @settings(max_examples=200)
    @given(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.05, 1.0),
           st.sampled_from([0.5, 2.0, 10.0]))
    def test_scaling(self, x, y, eta, c):
        assert_allclose(limit_S(c * x, c * y, eta), c ** (1 / eta) * limit_S(x, y, eta),
                        rtol=1e-12)


class TestPartial:
    def test_gaussian_pair(self):
        p = partial_index(solve_alpha(np.eye(2)), 2.0)
        assert_allclose(p.gamma, [1.0, 1.0], rtol=1e-14)
        assert_allclose(p.eta_I, 0.5, rtol=1e-14)

    def test_theta_one(self):
        p = partial_index(solve_alpha(equicorrelation(2, 0.5)), 1.0)
        assert_allclose(p.eta_I, math.sqrt(0.75), rtol=1e-13)

    def test_theta_zero(self):
        sol = solve_alpha([[1.0, -0.5, 0.3], [-0.5, 1.0, 0.3], [0.3, 0.3, 1.0]])
        p = partial_index(sol, 0.0)
        assert p.eta_I == 1.0
        assert_allclose(p.gamma, sol.mu / sol.q, rtol=1e-14)

    def test_literal_variant(self):
        p = partial_index(solve_alpha(np.eye(2)), 2.0)
        assert_allclose(p.eta_literal, 0.25, rtol=1e-14)
        assert_allclose(p.gamma_literal, [2.0, 2.0], rtol=1e-14)

    def test_limit_function(self):
        p = partial_index(solve_alpha(np.eye(3), I=[0, 2]), 2.0)
        assert_allclose(p.limit([2.0, 3.0]), 6.0, rtol=1e-14)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-0.99, 0.99), st.floats(0.0, 5.0))
    def test_reproduces_bivariate(self, rho, theta):
        p = partial_index(solve_alpha(equicorrelation(2, rho)), theta)
        b = bivariate_index(rho, theta)
        assert_allclose(p.eta_I, b.eta, rtol=1e-12)
        assert_allclose(p.gamma, 1 / (2 * b.eta), rtol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(correlations(2, 6), st.floats(0.1, 4.0))
    def test_invariants_and_range(self, S, theta):
        sol = solve_alpha(S)
        p = partial_index(sol, theta)
        assert 0 < p.eta_I <= 1
        assert np.all(p.gamma > 0)
        assert_allclose(p.gamma.sum(), 1 / p.eta_I, rtol=1e-12)
        k = S.shape[0]
        full = np.ones(k) @ np.linalg.solve(S, np.ones(k))
        assert p.eta_I >= full ** (-theta / 2) * (1 - 1e-12)


class TestGaussianExpansion:
    def test_independent(self):
        assert_allclose(gaussian_expansion(0.0, 100.0), 1e-4, rtol=1e-14)

    def test_rho_half(self):
        u = 1e6
        ref = (0.75**1.5 / 0.25 * (4 * math.pi) ** (-1 / 3) * math.log(u) ** (-1 / 3)
               * u ** (-4 / 3))
        assert_allclose(gaussian_expansion(0.5, u), ref, rtol=1e-13)

    def test_against_oracle(self):
        m = EllipticalModel(equicorrelation(2, 0.5), GaussianChi(2))
        u = 1e6
        ratio = math.exp(log_gaussian_expansion(0.5, u) - s_tilde(m, (0, 1), (1, 1), u))
        assert abs(ratio - 1) < 0.2

    def test_small_rho_limit(self):
        u = 1e3
        assert_allclose(gaussian_expansion(1e-9, u), u**-2, rtol=1e-7)

    def test_domain(self):
        with pytest.raises(DomainError):
            log_gaussian_expansion(0.2, 2.0)


class TestKotzMarginal:
    def test_mills(self):
        v = math.exp(kotz_marginal_tail(GAUSS_KOTZ, 3.0))
        assert_allclose(v, math.exp(-4.5) / (3 * math.sqrt(2 * math.pi)), rtol=1e-14)
        assert_allclose(v, 1.477e-3, rtol=1e-3)

    def test_ratio_improves(self):
        m = EllipticalModel(equicorrelation(2, 0.0), GAUSS_KOTZ)
        gap = [abs(kotz_marginal_tail(GAUSS_KOTZ, a) - marginal_survival(m, a)) for a in (3, 8)]
        assert gap[1] < gap[0]

    def test_exponential(self):
        ref = math.exp(-10) / math.sqrt(2 * math.pi * 10)
        assert_allclose(math.exp(kotz_marginal_tail(EXPO, 10.0)), ref, rtol=1e-13)

    def test_quantile_gaussian(self):
        m = EllipticalModel(equicorrelation(2, 0.0), GAUSS_KOTZ)
        exact = marginal_isf_log(m, -math.log(1e6))
        assert_allclose(kotz_b_of_u(GAUSS_KOTZ, 1e6), exact, rtol=0.01)

    def test_quantile_exponential(self):
        m = EllipticalModel(equicorrelation(2, 0.0), EXPO)
        exact = marginal_isf_log(m, -10.0)
        assert_allclose(kotz_b_of_u(EXPO, math.exp(10)), exact, rtol=0.02)

    def test_quantile_leading_term(self):
        law = KotzTypeIII(1.0, 1.0, 2.0, 2.0)
        u = 1e8
        lead = (math.log(u) / 2.0) ** 0.5
        corr = -0.5 * math.log(2 * math.pi * 4) / (2 * math.log(u))
        assert_allclose(kotz_b_of_u(law, u), lead * (1 + corr), rtol=1e-14)

    def test_wrong_family(self):
        with pytest.raises(DomainError):
            kotz_marginal_tail(GaussianChi(2), 3.0)


class TestStilde:
    @pytest.mark.parametrize("rho", [0.0, 0.3, 0.5, -0.4])
    @pytest.mark.parametrize("u", [1e4, 1e6, 1e8])
    def test_closed_reduces_to_gaussian(self, rho, u):
        assert_allclose(log_kotz_closed_expansion(GAUSS_KOTZ, rho, u),
                        log_gaussian_expansion(rho, u), rtol=1e-12)

    def test_kotz_theta_one_against_oracle(self):
        m = EllipticalModel(equicorrelation(2, 0.0), EXPO)
        errs = []
        for u in (1e6, 1e8):
            e = stilde_expansion(m, u)
            errs.append(abs(math.exp(e.log_general - s_tilde(m, (0, 1), (1, 1), u)) - 1))
        assert errs[0] < 0.25
        assert errs[1] < errs[0]

    @pytest.mark.parametrize("theta", [1.0, 2.0, 3.0])
    def test_slope_at_independence(self, theta):
        law = KotzTypeIII(1.0, 0.0, 1.0, theta)
        lu = np.log([1e6, 1e8, 1e10, 1e12])
        v = [log_kotz_closed_expansion(law, 0.0, math.exp(x)) for x in lu]
        # ln u coefficient is exactly -lambda; the log-log term bends the secant slightly.
        slope = np.polyfit(lu, v, 1)[0]
        assert_allclose(slope, -(2 ** (theta / 2)), rtol=0.02)

    def test_needs_bivariate(self):
        with pytest.raises(DomainError):
            stilde_expansion(EllipticalModel(equicorrelation(3, 0.1), EXPO), 1e4)
