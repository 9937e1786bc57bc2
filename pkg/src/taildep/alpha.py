"""Quadratic program ``min y' Sigma_II^{-1} y  subject to  y >= 1``.

The minimiser is ``y* = Sigma_{I,K} mu`` with ``mu = Sigma_KK^{-1} 1_K`` for a
unique active set ``K``: the set for which ``mu > 0`` and the implied inactive
coordinates ``Sigma_MK mu`` are at least one. Both conditions are the KKT
conditions of the problem, with multipliers ``2 mu``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import NoCertifiedSubset, NotPositiveDefinite
from .model import CorrelationMatrix, validate_correlation

CERT_TOL = 1e-10
ENUMERATION_LIMIT = 12
MAX_SIZE = 20


@dataclass(frozen=True, eq=False)
class AlphaSolution:
    """Certified solution of the constrained quadratic program.

    Index sets use the caller's 0-based coordinates. ``y`` and ``mu`` are
    aligned with ``index_set`` and ``active_set`` respectively.
    """

    index_set: tuple
    active_set: tuple
    y: np.ndarray
    q: float
    mu: np.ndarray
    branch: str = "enumeration"

    @property
    def alpha(self):
        return math.sqrt(self.q)

    @property
    def inactive_set(self):
        return tuple(i for i in self.index_set if i not in self.active_set)

    def to_dict(self):
        return {
            "index_set": [int(i) for i in self.index_set],
            "active_set": [int(i) for i in self.active_set],
            "inactive_set": [int(i) for i in self.inactive_set],
            "y": [float(v) for v in self.y],
            "q": float(self.q),
            "alpha": self.alpha,
            "mu": [float(v) for v in self.mu],
            "branch": self.branch,
        }


def _chol_solve(mat, rhs):
    try:
        factor = linalg.cho_factor(mat, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite("singular principal submatrix") from exc
    return linalg.cho_solve(factor, rhs, check_finite=False)


def _candidate(S, lower, K):
    """Evaluate active set ``K`` (positions into ``S``) for bounds ``lower``.

    Returns ``(y, mu, margin)``; ``margin`` is the smaller of the two
    certification slacks (``min mu`` and ``min (y_M - lower_M)``).
    """
    m = S.shape[0]
    K = list(K)
    M = [i for i in range(m) if i not in K]
    mu = _chol_solve(S[np.ix_(K, K)], lower[K])
    y = np.empty(m)
    y[K] = lower[K]
    margin = float(mu.min())
    if M:
        y[M] = S[np.ix_(M, K)] @ mu
        margin = min(margin, float((y[M] - lower[M]).min()))
    return y, mu, margin


def _certified(y, mu, lower, K, tol):
    if mu.min() <= -tol:
        return False
    M = [i for i in range(len(y)) if i not in K]
    return not M or (y[M] - lower[M]).min() >= -tol


def _solve_enumeration(S, lower, tol=CERT_TOL):
    m = S.shape[0]
    best = None
    for size in range(1, m + 1):
        for K in itertools.combinations(range(m), size):
            try:
                y, mu, margin = _candidate(S, lower, K)
            except NotPositiveDefinite:
                continue
            if not _certified(y, mu, lower, K, tol):
                continue
            q = float(lower[list(K)] @ mu)
            key = (q, K)
            if best is None or key < best[0]:
                best = (key, K, y, mu)
    if best is None:
        raise NoCertifiedSubset("no active set passes the certification conditions")
    _, K, y, mu = best
    return K, y, mu


def certified_subsets(sigma, I=None, tol=CERT_TOL):
    """All active sets passing both certification conditions, with margins.

    Returns a list of ``(K, margin)`` pairs, ``K`` in the caller's coordinates
    and ``margin`` the smaller of the two certification slacks. On
    non-degenerate input the list has exactly one entry.
    """
    if not isinstance(sigma, CorrelationMatrix):
        sigma = validate_correlation(sigma)
    I = _normalise_index(range(sigma.k) if I is None else I, sigma.k)
    S = sigma.sub(I)
    lower = np.ones(len(I))
    out = []
    for size in range(1, len(I) + 1):
        for K in itertools.combinations(range(len(I)), size):
            try:
                y, mu, margin = _candidate(S, lower, K)
            except NotPositiveDefinite:
                continue
            if _certified(y, mu, lower, K, tol):
                out.append((tuple(I[j] for j in K), margin))
    return out


def _solve_active_set(S, lower, tol=CERT_TOL, max_iter=500):
    """Primal-dual active-set iteration started from ``K = I``."""
    m = S.shape[0]
    K = set(range(m))
    seen = set()
    for _ in range(max_iter):
        Kt = tuple(sorted(K))
        y, mu, _ = _candidate(S, lower, Kt)
        neg = [Kt[j] for j in np.flatnonzero(mu < -tol)]
        M = [i for i in range(m) if i not in K]
        viol = [i for i in M if y[i] < lower[i] - tol]
        if not neg and not viol:
            return Kt, y, mu
        state = (Kt, tuple(neg), tuple(viol))
        if state in seen:
            break
        seen.add(state)
        if neg:
            # Drop the most negative multiplier first; re-add violators later.
            worst = Kt[int(np.argmin(mu))]
            K.discard(worst)
            if not K:
                K.add(int(np.argmax(lower)))
        else:
            K.add(max(viol, key=lambda i: lower[i] - y[i]))
    raise NoCertifiedSubset("active-set iteration failed to certify a subset")


def _normalise_index(I, k):
    I = tuple(sorted(int(i) for i in I))
    if not I:
        raise ValueError("index set must be non-empty")
    if len(set(I)) != len(I) or I[0] < 0 or I[-1] >= k:
        raise ValueError(f"index set {I} invalid for dimension {k}")
    return I


def solve_box_qp(S, lower, method="auto"):
    """Minimise ``y' S^{-1} y`` over ``y >= lower`` for SPD ``S`` and ``lower > 0``.

    Returns ``(active_positions, y, mu)`` with ``mu = S_KK^{-1} lower_K``.
    """
    S = np.asarray(S, dtype=float)
    lower = np.asarray(lower, dtype=float)
    m = S.shape[0]
    if method == "auto":
        method = "enumeration" if m <= ENUMERATION_LIMIT else "active_set"
    if method == "enumeration":
        return _solve_enumeration(S, lower)
    if method == "active_set":
        return _solve_active_set(S, lower)
    raise ValueError(f"unknown method {method!r}")


def solve_alpha(sigma, I=None, method="auto"):
    """Solve the unit-bound quadratic program on the block ``Sigma_II``.

    Parameters
    ----------
    sigma : CorrelationMatrix or array_like
    I : iterable of int, optional
        0-based coordinates; defaults to all of them.
    method : {"auto", "enumeration", "active_set"}
        ``auto`` enumerates every subset up to 12 coordinates and falls back
        to the active-set iteration up to 20.

    Returns
    -------
    AlphaSolution
    """
    if not isinstance(sigma, CorrelationMatrix):
        sigma = validate_correlation(sigma)
    I = _normalise_index(range(sigma.k) if I is None else I, sigma.k)
    if len(I) > MAX_SIZE:
        raise ValueError(f"index sets larger than {MAX_SIZE} are not supported")
    S = sigma.sub(I)
    if method == "auto":
        method = "enumeration" if len(I) <= ENUMERATION_LIMIT else "active_set"
    K, y, mu = solve_box_qp(S, np.ones(len(I)), method=method)
    q = float(mu.sum())
    return AlphaSolution(
        index_set=I,
        active_set=tuple(I[j] for j in K),
        y=y,
        q=q,
        mu=mu,
        branch=method,
    )


def trivariate_alpha(rho12, rho13, rho23):
    """Closed-form solution of the 3-coordinate problem.

    When ``1 + 2 min(rho) - rho12 - rho13 - rho23 > 0`` all three
    coordinates are active and ``q = 1' Sigma^{-1} 1`` as a rational function
    of the correlations; otherwise only the pair with the smallest
    correlation is active and ``q = 2 / (1 + rho_min)``.
    """
    sigma = validate_correlation(
        [[1.0, rho12, rho13], [rho12, 1.0, rho23], [rho13, rho23, 1.0]]
    )
    r = {(0, 1): float(rho12), (0, 2): float(rho13), (1, 2): float(rho23)}
    r12, r13, r23 = r[(0, 1)], r[(0, 2)], r[(1, 2)]
    rmin = min(r.values())
    if 1.0 + 2.0 * rmin - r12 - r13 - r23 > 0:
        num = (3.0 - 2.0 * (r12 + r13 + r23) - r12**2 - r13**2 - r23**2
               + 2.0 * (r12 * r13 + r12 * r23 + r13 * r23))
        den = 1.0 + 2.0 * r12 * r13 * r23 - r12**2 - r13**2 - r23**2
        q = num / den
        K = (0, 1, 2)
        # Cofactor form of Sigma^{-1} 1 for the weights.
        mu = np.array([
            (1 - r23) * (1 + r23 - r12 - r13),
            (1 - r13) * (1 + r13 - r12 - r23),
            (1 - r12) * (1 + r12 - r13 - r23),
        ]) / den
        y = np.ones(3)
        branch = "all"
    else:
        pair = min(r, key=r.get)
        i, j = pair
        (l,) = {0, 1, 2} - {i, j}
        rij = r[pair]
        q = 2.0 / (1.0 + rij)
        K = pair
        mu = np.full(2, 1.0 / (1.0 + rij))
        y = np.ones(3)
        y[l] = (sigma.entries[l, i] + sigma.entries[l, j]) / (1.0 + rij)
        branch = "pair"
    return AlphaSolution(index_set=(0, 1, 2), active_set=K, y=y, q=q, mu=mu, branch=branch)


def quadratic_form(sigma, I, y):
    S = sigma.sub(I) if isinstance(sigma, CorrelationMatrix) else np.asarray(sigma, float)
    y = np.asarray(y, dtype=float)
    return float(y @ _chol_solve(S, y))


def kkt_check(sigma, I, sol):
    """Largest violation of the optimality conditions of ``sol``.

    The residual is the maximum of: negativity of ``mu``; violation of
    ``y >= 1``; distance of active coordinates from 1; mismatch between ``q``
    and the quadratic form at ``y``; and the gradient ``(Sigma_II^{-1} y)_M``
    on inactive coordinates, which must vanish.
    """
    if not isinstance(sigma, CorrelationMatrix):
        sigma = validate_correlation(sigma)
    I = _normalise_index(I, sigma.k)
    S = sigma.sub(I)
    y = np.asarray(sol.y, dtype=float)
    grad = _chol_solve(S, y)
    pos = {c: n for n, c in enumerate(I)}
    K = [pos[c] for c in sol.active_set]
    M = [n for n in range(len(I)) if n not in K]
    parts = [
        max(0.0, -float(np.min(sol.mu))),
        max(0.0, float(np.max(1.0 - y))),
        float(np.max(np.abs(y[K] - 1.0))),
        abs(float(sol.q) - float(y @ grad)),
    ]
    if M:
        parts.append(float(np.max(np.abs(grad[M]))))
    return max(parts)


def brute_force_alpha(sigma, I=None, grid_step=0.01, budget=200_000):
    """Lattice search plus coordinate-descent polish; independent of ``solve_alpha``.

    The lattice ``{1, 1 + step, ..., 4}^m`` is searched exhaustively when it has
    at most ``budget`` points; larger lattices are searched coarse to fine,
    halving the spacing around the incumbent until it reaches ``grid_step``.
    The best lattice point is then polished by exact cyclic coordinate
    minimisation with the bound ``y >= 1``.
    """
    if not isinstance(sigma, CorrelationMatrix):
        sigma = validate_correlation(sigma)
    I = _normalise_index(range(sigma.k) if I is None else I, sigma.k)
    if not 0 < grid_step <= 0.1:
        raise ValueError("grid_step must lie in (0, 0.1]")
    m = len(I)
    if m > 6:
        raise ValueError("brute force supports at most 6 coordinates")
    P = np.linalg.inv(sigma.sub(I))
    P = 0.5 * (P + P.T)

    def best_on(axes):
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
        vals = np.einsum("ij,jk,ik->i", mesh, P, mesh)
        j = int(np.argmin(vals))
        return mesh[j]

    step = grid_step
    per_axis = max(2, int(budget ** (1.0 / m)))
    while int(round(3.0 / step)) + 1 > per_axis:
        step *= 2.0
    y = best_on([np.linspace(1.0, 1.0 + 3.0, int(round(3.0 / step)) + 1)] * m)
    while step > grid_step * (1 + 1e-12):
        half_width = step
        step = max(step / 2.0, grid_step)
        axes = []
        for c in y:
            lo = max(1.0, c - half_width)
            hi = min(4.0, c + half_width)
            n = int(round((hi - lo) / step)) + 1
            axes.append(np.linspace(lo, hi, max(n, 2)))
        y = best_on(axes)
    y = y.astype(float).copy()
    for _ in range(100_000):
        prev = y.copy()
        for i in range(m):
            # Unconstrained coordinate minimiser, then clamp to the bound.
            off = P[i] @ y - P[i, i] * y[i]
            y[i] = max(1.0, -off / P[i, i])
        if np.max(np.abs(y - prev)) <= 1e-15:
            break
    return float(y @ P @ y)
