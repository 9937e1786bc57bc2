import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from taildep._quadrature import log_integrate, logsumexp_pair
from taildep.exceptions import QuadratureFailure


def test_polynomial_exact():
    # GK15 integrates degree-2 polynomials exactly on one panel.
    val = log_integrate(lambda x: 2 * np.log(np.abs(x) + 1e-300), [0.0, 3.0])
    assert_allclose(math.exp(val), 9.0, rtol=1e-13)


def test_tiny_integrand_keeps_relative_accuracy():
    # exp(-5000 - x) over [0, 1] underflows in linear scale.
    val = log_integrate(lambda x: -5000.0 - x, [0.0, 1.0])
    assert_allclose(val, -5000.0 + math.log1p(-math.exp(-1.0)), rtol=1e-13)


@pytest.mark.parametrize("edges", [[0.0, 0.3, 1.0], [0.0, 1.0]])
def test_kink(edges):
    # |x - 0.3| has a kink; refinement must cope whether or not it is an edge.
    val = log_integrate(lambda x: np.log(np.abs(x - 0.3) + 1e-300), edges, rtol=1e-10)
    assert_allclose(math.exp(val), (0.3**2 + 0.7**2) / 2, rtol=1e-9)


def test_zero_integrand():
    assert log_integrate(lambda x: np.full_like(x, -np.inf), [0.0, 1.0]) == -math.inf


def test_nan_raises():
    with pytest.raises(QuadratureFailure):
        log_integrate(lambda x: np.full_like(x, np.nan), [0.0, 1.0])


def test_budget_exhaustion_raises():
    with pytest.raises(QuadratureFailure):
        log_integrate(lambda x: np.log(np.abs(np.sin(1.0 / (x + 1e-9)))), [0.0, 1.0],
                      max_panels=20)


def test_logsumexp_pair():
    assert logsumexp_pair(-math.inf, 2.0) == 2.0
    assert_allclose(logsumexp_pair(-1000.0, -1000.0), -1000.0 + math.log(2.0))
