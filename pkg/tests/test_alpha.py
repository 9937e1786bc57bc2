import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from numpy.testing import assert_allclose

from taildep.alpha import (
    brute_force_alpha,
    certified_subsets,
    kkt_check,
    solve_alpha,
    trivariate_alpha,
)
from taildep.model import equicorrelation, validate_correlation

from conftest import correlations, random_correlation

LEMMA_II = [[1.0, -0.5, 0.3], [-0.5, 1.0, 0.3], [0.3, 0.3, 1.0]]


def reference_qp(S):
    """Subset enumeration written out directly from the optimality conditions."""
    m = S.shape[0]
    best = None
    for size in range(1, m + 1):
        for K in itertools.combinations(range(m), size):
            K = list(K)
            M = [i for i in range(m) if i not in K]
            mu = np.linalg.solve(S[np.ix_(K, K)], np.ones(size))
            if np.any(mu <= 0):
                continue
            yM = S[np.ix_(M, K)] @ mu
            if np.any(yM < 1 - 1e-9):
                continue
            q = mu.sum()
            if best is None or q < best[0]:
                best = (q, K)
    return best


class TestExamples:
    def test_identity(self):
        sol = solve_alpha(np.eye(3))
        assert sol.active_set == (0, 1, 2)
        assert_allclose(sol.y, 1.0)
        assert_allclose(sol.q, 3.0, rtol=1e-14)
        assert_allclose(sol.alpha, math.sqrt(3.0), rtol=1e-14)
        assert_allclose(sol.mu, 1.0)
        assert kkt_check(np.eye(3), (0, 1, 2), sol) < 1e-14

    def test_equicorrelated(self):
        sol = solve_alpha(equicorrelation(3, 0.5))
        assert sol.active_set == (0, 1, 2)
        assert_allclose(sol.q, 3 / (1 + 2 * 0.5), rtol=1e-12)

    def test_pair_active(self):
        sol = solve_alpha(LEMMA_II)
        assert sol.active_set == (0, 1)
        assert sol.inactive_set == (2,)
        assert_allclose(sol.q, 4.0, rtol=1e-12)
        # y_3 = 0.3 * 2 + 0.3 * 2
        assert_allclose(sol.y, [1.0, 1.0, 1.2], rtol=1e-12)

    def test_subset_coordinates(self):
        sol = solve_alpha(equicorrelation(5, 0.2), I=[4, 1])
        assert sol.index_set == (1, 4)
        assert_allclose(sol.q, 2 / 1.2, rtol=1e-12)

    def test_single_coordinate(self):
        sol = solve_alpha(np.eye(2), I=[1])
        assert sol.q == pytest.approx(1.0)

    def test_bad_index(self):
        with pytest.raises(ValueError):
            solve_alpha(np.eye(3), I=[0, 3])
        with pytest.raises(ValueError):
            solve_alpha(np.eye(3), I=[])


class TestTrivariate:
    def test_equal(self):
        sol = trivariate_alpha(0.5, 0.5, 0.5)
        assert sol.branch == "all"
        assert_allclose(sol.q, 1.5, rtol=1e-12)

    def test_rational(self):
        # 1' S^{-1} 1 for the matrix, by a generic solve.
        S = np.array([[1, 0.2, 0.2], [0.2, 1, 0.5], [0.2, 0.5, 1]])
        ref = np.ones(3) @ np.linalg.solve(S, np.ones(3))
        assert_allclose(ref, 1.35 / 0.71, rtol=1e-12)
        assert_allclose(trivariate_alpha(0.2, 0.2, 0.5).q, ref, rtol=1e-12)

    def test_pair(self):
        sol = trivariate_alpha(-0.5, 0.3, 0.3)
        assert sol.branch == "pair"
        assert sol.active_set == (0, 1)
        assert_allclose(sol.q, 4.0, rtol=1e-12)

    def test_pair_other_position(self):
        sol = trivariate_alpha(0.3, 0.3, -0.5)
        assert sol.active_set == (1, 2)

    @settings(max_examples=200, deadline=None)
    @given(correlations(3, 3))
    def test_matches_solver(self, S):
        t = trivariate_alpha(S[0, 1], S[0, 2], S[1, 2])
        s = solve_alpha(S)
        assert t.active_set == s.active_set
        assert_allclose(t.q, s.q, rtol=1e-10)
        assert_allclose(t.y, s.y, rtol=1e-10)


class TestBruteForce:
    def test_identity(self):
        assert_allclose(brute_force_alpha(np.eye(2)), 2.0, atol=1e-4)

    def test_bivariate(self):
        assert_allclose(brute_force_alpha(equicorrelation(2, 0.5)), 4 / 3, atol=1e-3)

    def test_pair_active(self):
        assert_allclose(brute_force_alpha(LEMMA_II), 4.0, atol=1e-3)

    def test_step_domain(self):
        with pytest.raises(ValueError):
            brute_force_alpha(np.eye(2), grid_step=0.2)


class TestKKT:
    def test_tampering_detected(self):
        sol = solve_alpha(LEMMA_II)
        y = sol.y.copy()
        y[2] += 0.1
        bad = type(sol)(sol.index_set, sol.active_set, y, sol.q, sol.mu)
        assert kkt_check(LEMMA_II, (0, 1, 2), bad) >= 0.09

    @settings(max_examples=100, deadline=None)
    @given(correlations(2, 6))
    def test_residual_small(self, S):
        sol = solve_alpha(S)
        assert kkt_check(S, range(S.shape[0]), sol) < 1e-8


@settings(max_examples=150, deadline=None)
@given(correlations(2, 7))
def test_solution_invariants(S):
    sol = solve_alpha(S)
    k = S.shape[0]
    K = list(sol.active_set)
    M = list(sol.inactive_set)
    assert np.all(sol.mu > 0)
    assert_allclose(sol.mu.sum(), sol.q, rtol=1e-9)
    assert_allclose(np.ones(len(K)) @ np.linalg.solve(S[np.ix_(K, K)], np.ones(len(K))),
                    sol.q, rtol=1e-9)
    assert np.all(sol.y >= 1 - 1e-9)
    if M:
        assert_allclose(sol.y[M], S[np.ix_(M, K)] @ sol.mu, rtol=1e-9)
    # y = 1 is feasible
    assert sol.q <= np.ones(k) @ np.linalg.solve(S, np.ones(k)) + 1e-9
    ref_q, ref_K = reference_qp(S)
    assert tuple(ref_K) == sol.active_set
    assert_allclose(sol.q, ref_q, rtol=1e-10)


def test_brute_force_agreement():
    rng = np.random.default_rng(2024)
    for _ in range(60):
        k = int(rng.integers(2, 5))
        S = random_correlation(rng, k)
        sol = solve_alpha(S)
        bf = brute_force_alpha(S)
        # The polish is exact, so agreement is much tighter than step**2.
        assert sol.q <= bf + 1e-6
        assert bf - sol.q <= 1e-4 * sol.q


def test_enumeration_equals_active_set():
    rng = np.random.default_rng(3)
    for _ in range(200):
        S = random_correlation(rng, int(rng.integers(2, 9)), extra=1)
        a = solve_alpha(S, method="enumeration")
        b = solve_alpha(S, method="active_set")
        assert a.active_set == b.active_set
        assert_allclose(a.q, b.q, rtol=1e-10)


def test_large_index_set_uses_active_set():
    rng = np.random.default_rng(5)
    S = random_correlation(rng, 16, extra=4)
    sol = solve_alpha(S)
    assert sol.branch == "active_set"
    assert kkt_check(S, range(16), sol) < 1e-8
    with pytest.raises(ValueError):
        solve_alpha(random_correlation(rng, 21))


def test_uniqueness_of_certified_subset():
    rng = np.random.default_rng(9)
    kept = 0
    for _ in range(200):
        S = random_correlation(rng, int(rng.integers(2, 7)))
        found = certified_subsets(S)
        if min(m for _, m in found) <= 1e-6:
            continue  # degenerate draw
        kept += 1
        assert len(found) == 1
        assert tuple(found[0][0]) == solve_alpha(S).active_set
    assert kept > 150


@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.4, 0.95])
def test_bivariate_specialisation(rho):
    assert_allclose(solve_alpha(equicorrelation(2, rho)).q, 2 / (1 + rho), rtol=1e-12)


def test_monotone_in_equicorrelation():
    for k in (3, 5):
        rhos = np.linspace(-1 / (k - 1) + 0.02, 0.95, 30)
        q = [solve_alpha(equicorrelation(k, r)).q for r in rhos]
        assert np.all(np.diff(q) <= 1e-12)


def test_to_dict_plain_types():
    d = solve_alpha(LEMMA_II).to_dict()
    assert d["active_set"] == [0, 1]
    assert d["inactive_set"] == [2]
    assert isinstance(d["q"], float)
