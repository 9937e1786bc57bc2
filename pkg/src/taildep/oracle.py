"""Deterministic deep-tail survival probabilities of elliptical vectors.

For thresholds ``a_i`` on the coordinates in ``I``,

    P{X_i > a_i, i in I} = E[ S_R( h(U) ) ],    h(v) = max_i a_i / (l_i . v),

where ``l_i`` is row ``i`` of the Cholesky factor and the expectation runs over
directions ``U`` in the cone where every ``l_i . U > 0``. ``h`` attains its
minimum at the dominating direction ``v*``, obtained from the box-constrained
quadratic program ``min y' Sigma_II^{-1} y, y >= a``. The sphere is
parametrised by geodesics leaving ``v*``: along each of them ``h`` is
non-decreasing and every kink (a switch of the maximising coordinate) or cone
exit sits at an angle available in closed form. Integrals run in the log
domain, truncated where the radial log-survival has dropped 60 nats below its
value at ``v*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, special

from ._quadrature import log_integrate, logsumexp_pair
from .alpha import solve_box_qp
from .exceptions import ConvergenceFailure, DomainError, TailUnderflow
from .model import radial_isf_log

LOG_FLOOR = -600.0
CUTOFF_NATS = 60.0
INNER_RTOL = 1e-10
MARGINAL_RTOL = 1e-9
JOINT_2D_RTOL = 1e-9
JOINT_3D_RTOL = 1e-7
TWO_PI = 2.0 * math.pi
_GRID = np.geomspace(1e-10, 1.0, 41)


def _check_floor(log_p):
    if log_p < LOG_FLOOR:
        raise TailUnderflow(log_p, LOG_FLOOR)
    return log_p


def _log_sphere_const(k):
    """log of Gamma(k/2) / (sqrt(pi) Gamma((k-1)/2)): density factor of U_1."""
    return special.gammaln(0.5 * k) - 0.5 * math.log(math.pi) - special.gammaln(0.5 * (k - 1))


class _Geometry:
    """Dominating direction and geodesic integrals for one threshold vector."""

    def __init__(self, model, I, a):
        self.model = model
        self.ls = model.radial.log_sf
        self.I = list(I)
        self.a = np.asarray(a, dtype=float)
        L = model.chol
        self.rows = L[self.I]
        sigma = model.sigma.entries
        S = sigma[np.ix_(self.I, self.I)]
        K, _, mu = solve_box_qp(S, self.a)
        cols = [self.I[j] for j in K]
        x_full = sigma[:, cols] @ mu
        self.h_star = math.sqrt(float(self.a[list(K)] @ mu))
        v = linalg.solve_triangular(L, x_full, lower=True)
        self.p = v / np.linalg.norm(v)
        self.peak = float(self.ls(self.h_star))

    def _ties(self, A, B):
        """Angles in (0, pi) where the maximising coordinate switches."""
        out = []
        a = self.a
        m = len(a)
        for i in range(m):
            for j in range(i + 1, m):
                An = a[i] * A[j] - a[j] * A[i]
                Bn = a[i] * B[j] - a[j] * B[i]
                scale = abs(a[i] * A[j]) + abs(a[j] * A[i])
                if abs(An) <= 1e-12 * scale:
                    continue
                out.append((math.atan2(Bn, An) + 0.5 * math.pi) % math.pi)
        return out

    def inner(self, d, power):
        """log of  int_0^exit  sin(psi)**power * S_R(h(cos psi p + sin psi d)) dpsi."""
        A = self.rows @ self.p
        B = self.rows @ d
        exits = (np.arctan2(B, A) + 0.5 * math.pi) % math.pi
        exit_ = float(exits.min())
        a = self.a
        ls = self.ls

        def h(psi):
            den = np.outer(np.cos(psi), A) + np.outer(np.sin(psi), B)
            with np.errstate(divide="ignore"):
                ratio = np.where(den > 0, a / np.where(den > 0, den, 1.0), np.inf)
            return ratio.max(axis=1)

        def logf(psi):
            val = ls(h(psi))
            if power:
                with np.errstate(divide="ignore"):
                    val = val + power * np.log(np.sin(psi))
            return val

        grid = exit_ * _GRID[:-1]
        drop = ls(h(grid)) < self.peak - CUTOFF_NATS
        if drop.any():
            cut = float(grid[int(np.argmax(drop))])
        else:
            cut = exit_
        edges = [0.0, cut]
        edges.extend(g for g in grid if g < cut)
        edges.extend(t for t in self._ties(A, B) if 0.0 < t < cut)
        return log_integrate(logf, np.sort(edges), rtol=INNER_RTOL)

    def frame(self):
        """Orthonormal basis of the tangent space at ``p``."""
        k = self.p.size
        basis = np.linalg.svd(self.p[None, :])[2][1:]
        return basis.reshape(k - 1, k)

    def meridians(self, e1, e2):
        """Tangent angles of tie circles that pass through ``p`` (3-D only)."""
        out = []
        A = self.rows @ self.p
        a = self.a
        m = len(a)
        for i in range(m):
            for j in range(i + 1, m):
                An = a[i] * A[j] - a[j] * A[i]
                scale = abs(a[i] * A[j]) + abs(a[j] * A[i])
                if abs(An) > 1e-12 * scale:
                    continue
                n = a[i] * self.rows[j] - a[j] * self.rows[i]
                t = np.cross(n, self.p)
                if np.linalg.norm(t) <= 1e-14:
                    continue
                phi = math.atan2(float(t @ e2), float(t @ e1)) % TWO_PI
                out.extend([phi, (phi + math.pi) % TWO_PI])
        return out


def _joint_log(model, I, a, rtol=None):
    """Unchecked log P{X_i > a_i, i in I} for positive thresholds."""
    k = model.k
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise DomainError("thresholds must be positive")
    geo = _Geometry(model, I, a)
    if len(I) == 1:
        d = geo.frame()[0]
        return _log_sphere_const(k) + geo.inner(d, k - 2)
    if k == 2:
        d = geo.frame()[0]
        return logsumexp_pair(geo.inner(d, 0), geo.inner(-d, 0)) - math.log(TWO_PI)
    if k == 3:
        e1, e2 = geo.frame()
        edges = np.concatenate([np.linspace(0.0, TWO_PI, 13), geo.meridians(e1, e2)])

        def outer(phis):
            return np.array([
                geo.inner(math.cos(f) * e1 + math.sin(f) * e2, 1) for f in phis
            ])

        tol = JOINT_3D_RTOL if rtol is None else rtol
        return log_integrate(outer, edges, rtol=0.1 * tol) - math.log(2.0 * TWO_PI)
    raise DomainError("joint quadrature supports models of dimension 2 and 3 only")


def _marginal_log(model, a, coordinate=0):
    if a > 0:
        return _joint_log(model, [coordinate], [a])
    if a == 0:
        return math.log(0.5)
    return math.log1p(-math.exp(_joint_log(model, [coordinate], [-a])))


def marginal_survival(model, a):
    """``log P{X_1 > a}``; every coordinate shares this law (unit diagonal)."""
    return _check_floor(_marginal_log(model, float(a)))


def marginal_isf_log(model, log_p, rtol=1e-12):
    """Threshold ``a >= 0`` with ``log P{X_1 > a} = log_p`` (``log_p < log 1/2``)."""
    log_p = float(log_p)
    if not log_p < math.log(0.5):
        if log_p == math.log(0.5):
            return 0.0
        raise DomainError("marginal_isf_log needs log_p < log(1/2)")
    # An atom of R at 0 puts mass on X_1 = 0; levels inside the jump map to 0.
    if log_p >= math.log(0.5) + float(model.radial.log_sf(0.0)):
        return 0.0
    # P{X_1 > a} <= P{R > a}, so the radial quantile brackets from above.
    hi = float(radial_isf_log(model.radial, log_p))
    hi = max(hi, 1e-300)
    f = lambda t: _joint_log(model, [0], [t]) - log_p  # noqa: E731
    while f(hi) > 0:
        hi *= 2.0
    lo = 0.0
    try:
        return optimize.brentq(
            lambda t: math.log(0.5) - log_p if t <= 0 else f(t),
            lo, hi, xtol=1e-300, rtol=rtol, maxiter=200,
        )
    except RuntimeError as exc:
        raise ConvergenceFailure(str(exc)) from exc


def marginal_quantile(model, p):
    """Inverse of the marginal distribution function for ``p`` in ``(0.5, 1)``."""
    p = float(p)
    if not 0.5 <= p < 1.0:
        raise DomainError("marginal_quantile needs p in [0.5, 1)")
    if p == 0.5:
        return 0.0
    return marginal_isf_log(model, math.log1p(-p))


def joint_survival(model, I, thresholds, rtol=None):
    """``log P{X_i > a_i for all i in I}`` for positive thresholds."""
    I = [int(i) for i in I]
    if len(set(I)) != len(I) or min(I) < 0 or max(I) >= model.k:
        raise ValueError(f"invalid index set {I} for dimension {model.k}")
    order = np.argsort(I)
    I = [I[j] for j in order]
    a = np.asarray(thresholds, dtype=float)[order]
    return _check_floor(_joint_log(model, I, a, rtol=rtol))


def joint_survival_2d(model, a, b):
    """``log P{X_1 > a, X_2 > b}`` for a bivariate model."""
    if model.k != 2:
        raise DomainError("joint_survival_2d needs a bivariate model")
    return joint_survival(model, [0, 1], [a, b])


def joint_survival_3d(model, a1, a2, a3, rtol=None):
    """``log P{X_1 > a1, X_2 > a2, X_3 > a3}`` for a trivariate model."""
    if model.k != 3:
        raise DomainError("joint_survival_3d needs a trivariate model")
    return joint_survival(model, [0, 1, 2], [a1, a2, a3], rtol=rtol)


def _thresholds(model, x, u):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    if not u > x.max():
        raise DomainError("u must exceed every x_i")
    cache = {}
    out = []
    for xi in x:
        key = float(xi)
        if key not in cache:
            cache[key] = marginal_isf_log(model, math.log(key) - math.log(u))
        out.append(cache[key])
    return np.array(out)


def s_tilde(model, I, x, u):
    """``log P{Q(X_i) > 1 - x_i / u, i in I}`` with ``Q`` the marginal law."""
    I = list(I)
    x = np.broadcast_to(np.asarray(x, dtype=float), (len(I),))
    if len(I) not in (2, 3):
        raise DomainError("s_tilde supports index sets of size 2 or 3")
    return joint_survival(model, I, _thresholds(model, x, float(u)))


def s_ratio(model, I, x, u):
    """``S_u(x) = S~_u(x) / S~_u(1)``."""
    return math.exp(s_tilde(model, I, x, u) - s_tilde(model, I, 1.0, u))


def chi_curve(model, u_levels):
    """Pairs ``(u, P{X_1 > u, X_2 > u} / P{X_1 > u})`` for a bivariate model."""
    if model.k != 2:
        raise DomainError("chi_curve needs a bivariate model")
    out = []
    for u in u_levels:
        u = float(u)
        if not u > 0:
            raise DomainError("levels must be positive")
        chi = math.exp(joint_survival(model, [0, 1], [u, u]) - marginal_survival(model, u))
        out.append((u, min(chi, 1.0)))
    return out


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``(log u, log S~_u)``."""

    u_grid: tuple
    log_values: tuple
    slope: float
    intercept: float
    max_linear_residual: float

    def to_dict(self):
        return {
            "u_grid": list(self.u_grid),
            "log_values": list(self.log_values),
            "slope": self.slope,
            "intercept": self.intercept,
            "max_linear_residual": self.max_linear_residual,
        }


def fit_slope(u_grid, log_values):
    u = np.asarray(u_grid, dtype=float)
    y = np.asarray(log_values, dtype=float)
    if u.size < 4:
        raise ValueError("slope fits need at least 4 points")
    X = np.column_stack([np.log(u), np.ones_like(u)])
    (slope, intercept), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ np.array([slope, intercept])
    return SlopeFit(
        u_grid=tuple(float(v) for v in u),
        log_values=tuple(float(v) for v in y),
        slope=float(slope),
        intercept=float(intercept),
        max_linear_residual=float(np.abs(resid).max()),
    )


def rv_slope(model, I, u_grid):
    """Regular-variation index of ``u -> S~_u(1)`` fitted over ``u_grid``."""
    u = np.asarray(u_grid, dtype=float)
    if u.size < 5:
        raise ValueError("u_grid needs at least 5 points")
    if np.any(np.diff(u) <= 0) or u[0] <= 1:
        raise ValueError("u_grid must be increasing and above 1")
    if math.log10(u[-1] / u[0]) < 4 - 1e-9:
        raise ValueError("u_grid must span at least 4 decades")
    return fit_slope(u, [s_tilde(model, I, 1.0, v) for v in u])
