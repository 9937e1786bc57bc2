"""Rank and order-statistic estimators of tail dependence.

The pipeline estimates the correlation matrix through Kendall's tau and the
elliptical identity ``rho = sin(pi tau / 2)``, the Weibull tail coefficient
``theta`` through log-spacings of the upper order statistics, and combines
them into the residual dependence indices ``eta = ((1 + rho) / 2)**(theta/2)``
and ``eta_I = q**(-theta / 2)`` with ``q`` from :func:`~taildep.alpha.solve_alpha`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .alpha import solve_alpha, trivariate_alpha
from .exceptions import (
    DegenerateSample,
    InsufficientTail,
    InvalidCorrelation,
    PDRepairWarning,
)
from .model import validate_correlation
from .theory import bivariate_index

RHO_CLAMP = 1.0 - 1e-9
EIGEN_FLOOR = 1e-8


def default_kn(n):
    """``floor(n**0.4)``, never below 2."""
    return max(2, int(math.floor(float(n) ** 0.4)))


# --------------------------------------------------------------------------
# Kendall's tau


def _count_inversions(a):
    """Number of pairs ``i < j`` with ``a[i] > a[j]`` (equal values do not count).

    Bottom-up merge sort on integer codes. At each level every run is merged
    with its right neighbour; tagging values with their block number keeps all
    merges inside one ``np.sort`` and all counts inside one ``searchsorted``.
    """
    a = np.asarray(a, dtype=np.int64)
    n = a.size
    if n < 2:
        return 0
    span = int(a.max()) + 1
    idx = np.arange(n)
    total = 0
    width = 1
    while width < n:
        block = idx // (2 * width)
        left = (idx % (2 * width)) < width
        keyed = block * span + a
        lk = keyed[left]
        g = block[~left]
        stop = np.searchsorted(lk, (g + 1) * span, side="left")
        le = np.searchsorted(lk, keyed[~left], side="right")
        total += int((stop - le).sum())
        a = np.sort(keyed) - block * span
        width *= 2
    return total


def _tied_pairs(codes):
    counts = np.bincount(codes)
    return int((counts * (counts - 1) // 2).sum())


def concordance_difference(x, y):
    """Integer ``C - D``: concordant minus discordant pairs, ties counted as neither."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    n = x.size
    if n < 2:
        raise ValueError("need at least two observations")
    _, xc = np.unique(x, return_inverse=True)
    _, yc = np.unique(y, return_inverse=True)
    if xc.max() == 0 or yc.max() == 0:
        raise DegenerateSample("a coordinate is constant; Kendall's tau is undefined")
    order = np.lexsort((yc, xc))
    swaps = _count_inversions(yc[order])
    _, joint = np.unique(xc.astype(np.int64) * (yc.max() + 1) + yc, return_inverse=True)
    n0 = n * (n - 1) // 2
    return n0 - _tied_pairs(xc) - _tied_pairs(yc) + _tied_pairs(joint) - 2 * swaps


def kendall_tau(x, y):
    """Kendall's tau, ``(C - D) / (n (n - 1) / 2)``, in ``O(n log n)``.

    Examples
    --------
    >>> kendall_tau([1, 2, 3], [1, 3, 2])
    0.3333333333333333
    """
    n = np.asarray(x).size
    return concordance_difference(x, y) / (n * (n - 1) / 2)


def rho_from_tau(tau):
    """``sin(pi tau / 2)`` clamped to ``(-1 + 1e-9, 1 - 1e-9)``."""
    tau = float(tau)
    if not -1.0 <= tau <= 1.0:
        raise ValueError(f"tau={tau} outside [-1, 1]")
    return float(np.clip(math.sin(math.pi * tau / 2.0), -RHO_CLAMP, RHO_CLAMP))


# --------------------------------------------------------------------------
# Marginal tail


def _upper_tail(x, k_n):
    x = np.asarray(x, dtype=float).ravel()
    k_n = int(k_n)
    if not 2 <= k_n <= x.size / 2:
        raise ValueError(f"k_n={k_n} must satisfy 2 <= k_n <= n/2 with n={x.size}")
    pos = x[x > 0]
    if pos.size <= k_n:
        raise InsufficientTail(
            f"{pos.size} positive observations; need more than k_n = {k_n}"
        )
    top = np.sort(pos)[::-1][:k_n]
    return top, pos.size


def theta_hat(x, k_n):
    """Weibull tail coefficient from the ``k_n`` largest positive observations.

    With ``X_(1) >= ... >= X_(k)`` the top order statistics of the ``m``
    positive values,

    ``D = mean_i log X_(i) - log X_(k)``,
    ``T = mean_i log log(m / i) - log log(m / k)``,

    ``T / D`` estimates ``theta`` in ``-log P{X > x} ~ c x**theta``.
    Negative values are discarded; the marginals are symmetric, so about
    half of the sample is used.

    Parameters
    ----------
    x : array_like
        One-dimensional sample.
    k_n : int
        Number of upper order statistics, ``2 <= k_n <= len(x) / 2``.

    Returns
    -------
    float
    """
    top, m = _upper_tail(x, k_n)
    k = top.size
    i = np.arange(1, k + 1)
    d = np.mean(np.log(top) - math.log(top[-1]))
    t = np.mean(np.log(np.log(m / i)) - math.log(math.log(m / k)))
    if not d > 0:
        raise DegenerateSample("upper order statistics are all equal")
    return float(t / d)


class CEstimate(NamedTuple):
    """Scale estimates ``mean_i log(m / i) / X_(i)`` and its ``X_(i)**theta`` form."""

    literal: float
    corrected: float


def c_hat(x, k_n, theta):
    """Scale ``c`` in ``-log P{X > x} ~ c x**theta``, in two variants.

    ``literal`` divides by ``X_(i)`` and is consistent only for ``theta = 1``;
    ``corrected`` divides by ``X_(i)**theta``.
    """
    top, m = _upper_tail(x, k_n)
    i = np.arange(1, top.size + 1)
    lg = np.log(m / i)
    return CEstimate(
        literal=float(np.mean(lg / top)),
        corrected=float(np.mean(lg / top ** float(theta))),
    )


# --------------------------------------------------------------------------
# Dependence indices


def eta_hat_bivariate(rho_hat, theta_hat):
    """Plug-in ``((1 + rho) / 2)**(theta / 2)``."""
    return bivariate_index(rho_hat, theta_hat).eta


def repair_correlation(mat, floor=EIGEN_FLOOR):
    """Clip eigenvalues at ``floor`` and rescale to unit diagonal.

    Returns
    -------
    repaired : ndarray
    changed : bool
        False when the input already had all eigenvalues above ``floor``.
    """
    mat = np.asarray(mat, dtype=float)
    mat = 0.5 * (mat + mat.T)
    w, v = np.linalg.eigh(mat)
    if w.min() > floor:
        return mat, False
    fixed = (v * np.maximum(w, floor)) @ v.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    np.fill_diagonal(fixed, 1.0)
    return fixed, True


def tau_matrix(data, columns=None):
    data = np.asarray(data, dtype=float)
    cols = list(range(data.shape[1])) if columns is None else list(columns)
    m = len(cols)
    out = np.eye(m)
    for a, b in combinations(range(m), 2):
        out[a, b] = out[b, a] = kendall_tau(data[:, cols[a]], data[:, cols[b]])
    return out


def rho_matrix_from_tau(tau):
    tau = np.asarray(tau, dtype=float)
    out = np.vectorize(rho_from_tau)(tau)
    np.fill_diagonal(out, 1.0)
    return out


@dataclass(frozen=True, eq=False)
class PartialEstimate:
    """Estimated residual dependence index of one coordinate subset.

    ``branch`` names the closed-form case (``"all"`` or ``"pair"``) for
    three coordinates and is ``None`` otherwise; ``cross_check`` is the
    absolute difference between the closed-form and the solver's ``q``.
    """

    solution: object
    theta: float
    eta_I: float
    eta_literal: float
    sigma_hat: np.ndarray
    pd_repaired: bool
    branch: str | None
    cross_check: float | None

    @property
    def q(self):
        return self.solution.q

    def to_dict(self):
        return {
            "solution": self.solution.to_dict(),
            "theta": self.theta,
            "eta_I": self.eta_I,
            "eta_literal": self.eta_literal,
            "sigma_hat": self.sigma_hat.tolist(),
            "pd_repaired": self.pd_repaired,
            "branch": self.branch,
            "cross_check": self.cross_check,
        }


def _partial_from_rho(rho_hat, I, theta):
    fixed, changed = repair_correlation(rho_hat)
    if changed:
        warnings.warn("estimated correlation matrix repaired to positive definite",
                      PDRepairWarning, stacklevel=3)
    try:
        sigma = validate_correlation(fixed)
    except InvalidCorrelation as exc:
        raise DegenerateSample(f"estimated correlation matrix unusable: {exc}") from exc
    sol = solve_alpha(sigma)
    # Report the solution in the caller's coordinates.
    sol = type(sol)(
        index_set=tuple(I),
        active_set=tuple(I[j] for j in sol.active_set),
        y=sol.y, q=sol.q, mu=sol.mu, branch=sol.branch,
    )
    branch = gap = None
    if len(I) == 3:
        e = sigma.entries
        closed = trivariate_alpha(e[0, 1], e[0, 2], e[1, 2])
        branch = closed.branch
        gap = abs(closed.q - sol.q)
    return PartialEstimate(
        solution=sol,
        theta=float(theta),
        eta_I=sol.q ** (-theta / 2.0),
        eta_literal=sol.q ** (-theta),
        sigma_hat=sigma.entries.copy(),
        pd_repaired=changed,
        branch=branch,
        cross_check=gap,
    )


def eta_hat_partial(data, I, k_n=None, theta=None):
    """Estimate ``eta_I = q**(-theta / 2)`` for the coordinates ``I``.

    Parameters
    ----------
    data : SampleMatrix or array_like of shape (n, k)
    I : sequence of int
        0-based coordinates, at least two.
    k_n : int, optional
        Order statistics for ``theta_hat``; defaults to ``floor(n**0.4)``.
    theta : float, optional
        Use this tail coefficient instead of estimating it from column ``I[0]``.

    Returns
    -------
    PartialEstimate
    """
    arr = np.asarray(getattr(data, "data", data), dtype=float)
    I = [int(i) for i in I]
    if len(I) < 2 or len(set(I)) != len(I) or min(I) < 0 or max(I) >= arr.shape[1]:
        raise ValueError(f"invalid index set {I} for {arr.shape[1]} columns")
    if arr.shape[0] < 100:
        raise ValueError("need at least 100 observations")
    if theta is None:
        theta = theta_hat(arr[:, I[0]], default_kn(arr.shape[0]) if k_n is None else k_n)
    rho = rho_matrix_from_tau(tau_matrix(arr, I))
    return _partial_from_rho(rho, I, theta)


def empirical_s(data, I, x, u):
    """Rank plug-in for ``P{F_j(X_j) > 1 - x_j / u, j in I}``.

    Ranks are scaled as ``r / (n + 1)``. Returns the fraction of rows meeting
    every threshold; multiply by ``n`` for the exceedance count.
    """
    arr = np.asarray(getattr(data, "data", data), dtype=float)
    n = arr.shape[0]
    I = [int(i) for i in I]
    x = np.broadcast_to(np.asarray(x, dtype=float), (len(I),))
    u = float(u)
    if np.any(x <= 0) or u <= 0:
        raise ValueError("x and u must be positive")
    if u > n / 10:
        raise ValueError(f"u={u} too large for n={n}; need u <= n/10")
    ok = np.ones(n, dtype=bool)
    for j, xj in zip(I, x):
        r = stats.rankdata(arr[:, j]) / (n + 1)
        ok &= r > 1.0 - xj / u
    return float(ok.mean())


def empirical_chi(data, i, j, p):
    """Rank plug-in for ``P{F_j > p | F_i > p}``."""
    arr = np.asarray(getattr(data, "data", data), dtype=float)
    n = arr.shape[0]
    ri = stats.rankdata(arr[:, i]) / (n + 1)
    rj = stats.rankdata(arr[:, j]) / (n + 1)
    exceed = ri > p
    if not exceed.any():
        return float("nan")
    return float(np.mean(rj[exceed] > p))


# --------------------------------------------------------------------------
# Estimator object


class EllipticalTailEstimator(BaseEstimator):
    """Fit tail dependence summaries of an elliptical sample.

    Parameters
    ----------
    k_n : int or None
        Upper order statistics used for the tail coefficient; ``None``
        means ``floor(n**0.4)``.
    theta_column : int
        Column whose positive part drives ``theta_hat``.
    subsets : sequence of sequences of int or None
        0-based coordinate subsets for ``eta_I``; ``None`` means the full
        set when there are at least three columns.

    Attributes
    ----------
    tau_ : ndarray of shape (k, k)
    rho_ : ndarray of shape (k, k)
    k_n_ : int
    theta_ : float
    c_ : CEstimate
    eta_ : ndarray of shape (k, k)
        Pairwise ``eta``; the diagonal is one.
    partial_ : dict
        Maps subset tuples to :class:`PartialEstimate`.
    """

    def __init__(self, k_n=None, theta_column=0, subsets=None):
        self.k_n = k_n
        self.theta_column = theta_column
        self.subsets = subsets

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=100, ensure_min_features=2)
        n, k = X.shape
        self.n_features_in_ = k
        self.n_samples_ = n
        self.k_n_ = default_kn(n) if self.k_n is None else int(self.k_n)
        if not 0 <= self.theta_column < k:
            raise ValueError(f"theta_column={self.theta_column} out of range")
        col = X[:, self.theta_column]
        self.theta_ = theta_hat(col, self.k_n_)
        self.c_ = c_hat(col, self.k_n_, self.theta_)
        self.tau_ = tau_matrix(X)
        self.rho_ = rho_matrix_from_tau(self.tau_)
        eta = np.ones((k, k))
        for a, b in combinations(range(k), 2):
            eta[a, b] = eta[b, a] = eta_hat_bivariate(self.rho_[a, b], self.theta_)
        self.eta_ = eta
        if self.subsets is None:
            subsets = [tuple(range(k))] if k >= 3 else []
        else:
            subsets = [tuple(int(i) for i in s) for s in self.subsets]
        self.partial_ = {}
        for s in subsets:
            if len(s) < 2 or max(s) >= k or min(s) < 0 or len(set(s)) != len(s):
                raise ValueError(f"invalid subset {s}")
            self.partial_[s] = _partial_from_rho(self.rho_[np.ix_(s, s)], list(s), self.theta_)
        return self

    def eta_partial(self, subset):
        check_is_fitted(self, "partial_")
        return self.partial_[tuple(subset)].eta_I
