import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy import integrate, stats

from taildep.exceptions import DiagonalNotUnit, EntryOutOfRange, NotPositiveDefinite
from taildep.model import (
    EllipticalModel,
    ExpScaling,
    GaussianChi,
    KotzTypeIII,
    Lognormal,
    UnitGumbel,
    equicorrelation,
    log_survival,
    mda_diagnostic,
    radial_from_dict,
    radial_isf_log,
    radial_quantile,
    scaling_function_w,
    validate_correlation,
)

LAWS = [
    GaussianChi(2),
    GaussianChi(3),
    UnitGumbel(),
    KotzTypeIII(1.0, 0.0, 1.0, 1.0),
    KotzTypeIII(2.0, 1.5, 0.5, 2.0),
    KotzTypeIII(0.5, -1.0, 1.0, 3.0),
    Lognormal(0.0, 1.0),
    ExpScaling(1.0),
]


class TestCorrelation:
    def test_identity(self):
        c = validate_correlation(np.eye(3))
        assert_allclose(c.chol, np.eye(3))

    def test_unit_rho_rejected(self):
        with pytest.raises(EntryOutOfRange):
            validate_correlation([[1.0, 1.0], [1.0, 1.0]])

    def test_not_pd(self):
        # Equicorrelation is PD iff rho > -1/(k-1).
        m = np.full((3, 3), -0.6)
        np.fill_diagonal(m, 1.0)
        assert np.linalg.eigvalsh(m).min() < 0
        with pytest.raises(NotPositiveDefinite):
            validate_correlation(m)

    def test_diagonal(self):
        with pytest.raises(DiagonalNotUnit):
            validate_correlation([[1.0, 0.2], [0.2, 1.0 + 1e-9]])

    def test_symmetrised_from_lower(self):
        c = validate_correlation([[1.0, 0.9], [0.3, 1.0]])
        assert c.entries[0, 1] == c.entries[1, 0] == 0.3

    def test_immutable(self):
        c = validate_correlation(np.eye(2))
        with pytest.raises(ValueError):
            c.entries[0, 1] = 0.5

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_chol_reproduces(self, k, seed):
        g = np.random.default_rng(seed).standard_normal((k, k + 2))
        s = g @ g.T
        d = np.sqrt(np.diag(s))
        c = validate_correlation(s / np.outer(d, d))
        assert np.array_equal(c.entries, c.entries.T)
        assert np.all(np.diag(c.entries) == 1.0)
        assert_allclose(c.chol @ c.chol.T, c.entries, atol=1e-12)


class TestLogSurvival:
    def test_exponential(self):
        assert_allclose(log_survival(KotzTypeIII(1, 0, 1, 1), 2.0), -2.0, rtol=1e-15)

    def test_exp_scaling_against_hazard_integral(self):
        # -log S(u) is the integrated hazard exp(a s).
        cum, _ = integrate.quad(np.exp, 0.0, 3.0)
        assert_allclose(log_survival(ExpScaling(1.0), 3.0), -cum, rtol=1e-12)
        assert_allclose(-cum, -19.0855369, rtol=1e-8)

    def test_unit_gumbel_atom(self):
        assert_allclose(log_survival(UnitGumbel(), 0.0), math.log1p(-math.exp(-1)), rtol=1e-14)

    def test_gaussian_chi_against_scipy(self):
        u = np.array([0.5, 2.0, 10.0, 30.0])
        assert_allclose(GaussianChi(3).log_sf(u), stats.chi(3).logsf(u), rtol=1e-12)

    def test_lognormal_far_tail(self):
        u = np.array([1.0, 50.0, 1e10])
        assert_allclose(Lognormal(0.0, 1.0).log_sf(u), stats.norm.logsf(np.log(u)), rtol=1e-13)

    def test_kotz_endpoint(self):
        law = KotzTypeIII(2.0, 1.5, 0.5, 2.0)
        u0 = law.lower
        assert u0 > 0
        assert log_survival(law, u0) == pytest.approx(0.0, abs=1e-12)
        assert log_survival(law, 0.5 * u0) == 0.0

    @pytest.mark.parametrize("law", LAWS, ids=repr)
    def test_strictly_decreasing_and_invertible(self, law):
        hi = radial_isf_log(law, math.log(1e-12))
        u = np.geomspace(law.lower + 1e-3 * max(1.0, hi), hi, 60)
        ls = law.log_sf(u)
        assert np.all(np.diff(ls) < 0)
        assert_allclose(radial_isf_log(law, ls), u, rtol=1e-9)


class TestQuantile:
    def test_exponential(self):
        assert_allclose(radial_quantile(KotzTypeIII(1, 0, 1, 1), 1 - math.exp(-2)), 2.0, rtol=1e-12)

    def test_rayleigh(self):
        assert_allclose(radial_quantile(GaussianChi(2), 1 - math.exp(-0.5)), 1.0, rtol=1e-12)

    @pytest.mark.parametrize("law", LAWS, ids=repr)
    def test_monotone(self, law):
        assert radial_quantile(law, 0.5) < radial_quantile(law, 0.9)

    def test_domain(self):
        with pytest.raises(ValueError):
            radial_quantile(GaussianChi(2), 1.0)


class TestScalingFunction:
    def test_exponential_constant(self):
        assert_allclose(scaling_function_w(KotzTypeIII(1, 0, 1, 1), 5.0), 1.0, rtol=1e-12)
        assert_allclose(scaling_function_w(KotzTypeIII(1, 0, 1, 1), 5.0, method="quadrature"),
                        1.0, rtol=1e-9)

    def test_rayleigh_quadrature(self):
        assert_allclose(scaling_function_w(GaussianChi(2), 10.0), 10.0, rtol=0.01)

    def test_exp_scaling_closed(self):
        assert_allclose(scaling_function_w(ExpScaling(1.0), 3.0), math.exp(3.0), rtol=1e-6)

    def test_exp_scaling_quadrature_is_only_asymptotic(self):
        # The ratio definition converges to the hazard only as u grows.
        law = ExpScaling(1.0)
        assert_allclose(scaling_function_w(law, 3.0, method="quadrature"), math.exp(3.0), rtol=0.06)
        med = radial_quantile(law, 0.5)
        u = 10 * med
        assert_allclose(scaling_function_w(law, u, method="quadrature"),
                        scaling_function_w(law, u, method="closed"), rtol=0.01)

    @pytest.mark.parametrize("theta", [1.0, 2.0, 3.0])
    def test_kotz_quadrature_matches_closed(self, theta):
        law = KotzTypeIII(1.0, 0.0, 1.0, theta)
        u = 10 * radial_quantile(law, 0.5)
        assert_allclose(scaling_function_w(law, u, method="quadrature"),
                        scaling_function_w(law, u, method="closed"), rtol=0.01)

    @pytest.mark.parametrize("law", LAWS, ids=repr)
    def test_u_w_increasing(self, law):
        q99 = radial_quantile(law, 0.99)
        # survival at the top of the grid is about 1e-60
        top = radial_isf_log(law, -140.0)
        u = np.geomspace(q99, top, 8)
        uw = [v * scaling_function_w(law, v, method="quadrature") for v in u]
        assert np.all(np.diff(uw) > 0)


class TestMDA:
    def test_memoryless(self):
        d = mda_diagnostic(KotzTypeIII(1, 0, 1, 1), [50.0], [1.0])
        assert abs(d[0, 0]) < 1e-12

    def test_rayleigh(self):
        assert abs(mda_diagnostic(GaussianChi(2), [100.0], [1.0])[0, 0]) < 1e-3

    def test_gumbel(self):
        assert abs(mda_diagnostic(UnitGumbel(), [10.0], [2.0])[0, 0]) < 1e-3


class TestModel:
    def test_from_dict_roundtrip(self):
        for law in LAWS:
            assert radial_from_dict(law.to_dict()) == law

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            radial_from_dict({"family": "cauchy"})

    @pytest.mark.parametrize("bad", [dict(r=0.0), dict(theta=-1.0), dict(K=0.0)])
    def test_kotz_parameters(self, bad):
        with pytest.raises(ValueError):
            KotzTypeIII(**bad)

    def test_exp_scaling_parameter(self):
        with pytest.raises(ValueError):
            ExpScaling(0.0)

    def test_chol_cached(self):
        m = EllipticalModel(equicorrelation(3, 0.4), GaussianChi(3))
        assert_allclose(m.chol @ m.chol.T, m.sigma.entries, atol=1e-12)
        assert m.k == 3
