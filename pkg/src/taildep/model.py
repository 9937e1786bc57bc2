"""Correlation matrices, radial laws and the elliptical model container.

An elliptical vector is ``X = R * L @ U`` with ``U`` uniform on the unit
sphere, ``R`` a positive radius independent of ``U`` and ``L`` the lower
Cholesky factor of the correlation matrix (so ``A = L.T`` satisfies
``A.T @ A = Sigma``). Every radial family exposes its exact log-survival
function, vectorised over numpy arrays; all tail arithmetic stays in the log
domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from ._quadrature import log_integrate
from .exceptions import (
    ConvergenceFailure,
    DiagonalNotUnit,
    DomainError,
    EntryOutOfRange,
    NotPositiveDefinite,
    QuadratureFailure,
)

ENTRY_MARGIN = 1e-6
PIVOT_FLOOR = 1e-12
DIAG_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Validated correlation matrix with its cached lower Cholesky factor.

    Build instances with :func:`validate_correlation`.
    """

    entries: np.ndarray
    chol: np.ndarray

    @property
    def k(self):
        return self.entries.shape[0]

    def sub(self, rows, cols=None):
        rows = list(rows)
        cols = rows if cols is None else list(cols)
        return self.entries[np.ix_(rows, cols)]

    def __repr__(self):
        return f"CorrelationMatrix(k={self.k}, entries={self.entries.tolist()!r})"


def validate_correlation(raw):
    """Check ``raw`` and return it as a :class:`CorrelationMatrix`.

    The upper triangle is ignored: the matrix is rebuilt from its lower
    triangle so symmetry holds bit for bit.

    Raises
    ------
    DiagonalNotUnit
        If some ``|raw[i, i] - 1| > 1e-12``.
    EntryOutOfRange
        If some off-diagonal ``|rho_ij| >= 1 - 1e-6``.
    NotPositiveDefinite
        If a Cholesky pivot is ``<= 1e-12``.
    """
    a = np.array(raw, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"correlation matrix must be square, got shape {a.shape}")
    k = a.shape[0]
    if k < 2:
        raise ValueError("correlation matrix must be at least 2x2")
    if not np.all(np.isfinite(a)):
        raise ValueError("correlation matrix has non-finite entries")
    diag = np.diag(a)
    bad = np.flatnonzero(np.abs(diag - 1.0) > DIAG_TOL)
    if bad.size:
        i = int(bad[0])
        raise DiagonalNotUnit(f"diagonal entry ({i + 1},{i + 1}) = {float(diag[i])!r} is not 1")
    lower = np.tril(a, -1)
    sym = lower + lower.T
    np.fill_diagonal(sym, 1.0)
    il, jl = np.tril_indices(k, -1)
    off = sym[il, jl]
    bad = np.flatnonzero(np.abs(off) >= 1.0 - ENTRY_MARGIN)
    if bad.size:
        i, j = int(il[bad[0]]), int(jl[bad[0]])
        raise EntryOutOfRange(
            f"entry ({i + 1},{j + 1}) = {float(sym[i, j])!r} outside (-1+1e-6, 1-1e-6)"
        )
    try:
        chol = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    pivots = np.diag(chol) ** 2
    if np.any(pivots <= PIVOT_FLOOR):
        raise NotPositiveDefinite(
            f"Cholesky pivot {pivots.min():.3g} is below {PIVOT_FLOOR:g}"
        )
    sym.setflags(write=False)
    chol.setflags(write=False)
    return CorrelationMatrix(sym, chol)


def equicorrelation(k, rho):
    """Validated ``k x k`` matrix with every off-diagonal entry equal to ``rho``."""
    a = np.full((k, k), float(rho))
    np.fill_diagonal(a, 1.0)
    return validate_correlation(a)


def bivariate_correlation(rho):
    return validate_correlation([[1.0, rho], [rho, 1.0]])


# ---------------------------------------------------------------------------
# Radial laws


def _log_gammaincc(a, x):
    """``log Q(a, x)`` (regularised upper incomplete gamma), deep-tail safe."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    near = pos & (x <= 500.0)
    out[near] = np.log(special.gammaincc(a, x[near]))
    far = x > 500.0
    if far.any():
        xf = x[far]
        # Modified Lentz evaluation of the Legendre continued fraction.
        tiny = 1e-300
        b = xf + 1.0 - a
        c = np.full_like(xf, 1.0 / tiny)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, 200):
            an = -i * (i - a)
            b = b + 2.0
            d = an * d + b
            d = np.where(np.abs(d) < tiny, tiny, d)
            c = b + an / c
            c = np.where(np.abs(c) < tiny, tiny, c)
            d = 1.0 / d
            delta = d * c
            h = h * delta
            if np.all(np.abs(delta - 1.0) < 1e-16):
                break
        out[far] = -xf + a * np.log(xf) - special.gammaln(a) + np.log(h)
    return out


class RadialLaw:
    """Base class for distributions of the radius ``R``.

    Subclasses implement ``log_sf``; ``lower`` is the support lower endpoint
    ``u0`` below which the survival function equals one.
    """

    name = "radial"
    lower = 0.0
    # Weibull tail-coefficient when the scaling function is regularly
    # varying, None when it is not (rapid variation of w).
    theta = None

    def log_sf(self, u):
        raise NotImplementedError

    def closed_form_w(self, u):
        """Closed-form scaling function, or None when only quadrature applies."""
        return None

    def params(self):
        return {}

    def to_dict(self):
        return {"family": self.name, **self.params()}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.params().items()))))


class GaussianChi(RadialLaw):
    """Radius of a standard Gaussian vector: ``R**2`` is chi-square(dof)."""

    name = "gaussian_chi"
    theta = 2.0

    def __init__(self, dof=2):
        if int(dof) != dof or dof < 1:
            raise ValueError(f"dof must be a positive integer, got {dof!r}")
        self.dof = int(dof)

    def params(self):
        return {"dof": self.dof}

    def log_sf(self, u):
        u = np.asarray(u, dtype=float)
        if self.dof == 2:
            return np.where(u > 0, -0.5 * u * u, 0.0)
        return _log_gammaincc(0.5 * self.dof, 0.5 * np.where(u > 0, u, 0.0) ** 2)


class UnitGumbel(RadialLaw):
    """Positive part of a standard Gumbel variable, ``R = max(G, 0)``.

    The atom ``P{R = 0} = exp(-1)`` sits at the support endpoint; for ``u >= 0``
    the survival function is the Gumbel one, ``1 - exp(-exp(-u))``.
    """

    name = "unit_gumbel"
    theta = 1.0

    def log_sf(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        mid = (u >= 0) & (u <= 30.0)
        out[mid] = np.log(-np.expm1(-np.exp(-u[mid])))
        far = u > 30.0
        y = np.exp(-u[far])
        out[far] = -u[far] - 0.5 * y
        return out

    def closed_form_w(self, u):
        return None


class KotzTypeIII(RadialLaw):
    """Kotz Type III radius with exact survival ``K u**N exp(-r u**theta)``.

    Below the support endpoint ``u0`` the survival function is one. ``u0`` is
    the larger of the point where the expression reaches one and the mode
    ``(max(N, 0) / (r theta))**(1/theta)`` of ``u**N exp(-r u**theta)``.
    """

    name = "kotz"

    def __init__(self, K=1.0, N=0.0, r=1.0, theta=1.0):
        K, N, r, theta = float(K), float(N), float(r), float(theta)
        if not (K > 0 and r > 0 and theta > 0):
            raise ValueError(f"Kotz law needs K, r, theta > 0; got K={K}, r={r}, theta={theta}")
        self.K, self.N, self.r, self.theta = K, N, r, theta
        self.lower = self._support_endpoint()

    def params(self):
        return {"K": self.K, "N": self.N, "r": self.r, "theta": self.theta}

    def _g(self, u):
        return math.log(self.K) + self.N * math.log(u) - self.r * u ** self.theta

    def _support_endpoint(self):
        mode = (max(self.N, 0.0) / (self.r * self.theta)) ** (1.0 / self.theta)
        if self.N == 0.0:
            if self.K <= 1.0:
                return 0.0
            return (math.log(self.K) / self.r) ** (1.0 / self.theta)
        start = mode if self.N > 0 else 0.0
        if self.N > 0 and self._g(mode) <= 0.0:
            return mode
        lo = start if start > 0 else 1e-300
        hi = max(2.0 * start, 1.0)
        while self._g(hi) > 0.0:
            hi *= 2.0
        if self.N < 0:
            # g -> +inf at 0+, so walk lo down until g is positive.
            lo = min(hi, 1.0)
            while self._g(lo) <= 0.0:
                lo *= 0.5
        root = optimize.brentq(self._g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
        return max(root, mode)

    def log_sf(self, u):
        u = np.asarray(u, dtype=float)
        above = u > self.lower
        safe = np.where(above, u, 1.0)
        with np.errstate(divide="ignore"):
            g = math.log(self.K) + self.N * np.log(safe) - self.r * safe ** self.theta
        return np.where(above, np.minimum(g, 0.0), 0.0)

    def closed_form_w(self, u):
        # Exact hazard of the survival function above u0.
        u = np.asarray(u, dtype=float)
        return self.r * self.theta * u ** (self.theta - 1.0) - self.N / u


class Lognormal(RadialLaw):
    """Lognormal radius; its scaling function has Weibull coefficient 0."""

    name = "lognormal"
    theta = 0.0

    def __init__(self, mu=0.0, sigma=1.0):
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma!r}")
        self.mu, self.sigma = float(mu), float(sigma)

    def params(self):
        return {"mu": self.mu, "sigma": self.sigma}

    def log_sf(self, u):
        u = np.asarray(u, dtype=float)
        pos = u > 0
        z = (np.log(np.where(pos, u, 1.0)) - self.mu) / self.sigma
        # log_ndtr keeps full relative accuracy far into the tail.
        return np.where(pos, special.log_ndtr(-z), 0.0)


class ExpScaling(RadialLaw):
    """Radius whose hazard rate is exactly ``exp(a u)``.

    Survival ``exp(-(exp(a u) - 1) / a)``; the scaling function grows
    exponentially, so it is not regularly varying.
    """

    name = "exp_scaling"

    def __init__(self, a=1.0):
        if not a > 0:
            raise ValueError(f"a must be positive, got {a!r}")
        self.a = float(a)

    def params(self):
        return {"a": self.a}

    def log_sf(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore"):
            return np.where(u > 0, -np.expm1(self.a * u) / self.a, 0.0)

    def closed_form_w(self, u):
        return np.exp(self.a * np.asarray(u, dtype=float))


FAMILIES = {
    cls.name: cls for cls in (GaussianChi, UnitGumbel, KotzTypeIII, Lognormal, ExpScaling)
}


def radial_from_dict(params):
    """Build a radial law from ``{"family": name, **params}``."""
    params = dict(params)
    family = params.pop("family")
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown radial family {family!r}; choose from {sorted(FAMILIES)}")
    return cls(**params)


def log_survival(law, u):
    """``log P{R > u}``; zero at and below the support endpoint."""
    out = law.log_sf(u)
    return float(out) if np.ndim(out) == 0 else out


def _isf_log(law, target, max_iter=200, rtol=1e-13):
    """Smallest ``u`` with ``log_sf(u) <= target``, by bracketing and bisection."""
    t = np.atleast_1d(np.asarray(target, dtype=float))
    if np.any(t > 0) or np.any(np.isnan(t)):
        raise DomainError("log-survival targets must be <= 0")
    u0 = law.lower
    ls0 = float(law.log_sf(u0))
    out = np.full_like(t, u0)
    todo = t < ls0
    if not todo.any():
        return out
    tt = t[todo]
    lo = np.full_like(tt, u0)
    hi = np.full_like(tt, max(2.0 * u0, 1.0))
    for _ in range(2100):
        short = law.log_sf(hi) > tt
        if not short.any():
            break
        lo = np.where(short, hi, lo)
        hi = np.where(short, hi * 2.0, hi)
    else:
        raise ConvergenceFailure("could not bracket the quantile")
    # Converged entries are frozen so each result is independent of the batch.
    live = np.ones(tt.shape, dtype=bool)
    for _ in range(max_iter):
        live &= ~((hi - lo <= rtol * hi) | (hi <= 1e-300))
        if not live.any():
            break
        mid = 0.5 * (lo[live] + hi[live])
        below = law.log_sf(mid) > tt[live]
        lo[live] = np.where(below, mid, lo[live])
        hi[live] = np.where(below, hi[live], mid)
    else:
        raise ConvergenceFailure(f"bisection did not converge in {max_iter} iterations")
    out[todo] = 0.5 * (lo + hi)
    return out


def radial_quantile(law, p):
    """Inverse of the radial distribution function at probability ``p``.

    Accepts scalars or arrays. For probabilities close to one, prefer
    :func:`radial_isf_log`, which takes ``log(1 - p)`` directly.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise DomainError("p must lie in (0, 1)")
    out = _isf_log(law, np.log1p(-p_arr))
    return float(out[0]) if p_arr.ndim == 0 else out.reshape(p_arr.shape)


def radial_isf_log(law, log_p):
    """Radius ``u`` whose log-survival equals ``log_p``."""
    arr = np.asarray(log_p, dtype=float)
    out = _isf_log(law, arr)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


TAIL_CUTOFF_NATS = 60.0


def scaling_function_w_quadrature(law, u, rtol=1e-10):
    """``(1 - F(u)) / integral_u^inf (1 - F(s)) ds`` by log-domain quadrature."""
    u = float(u)
    if not u > law.lower:
        raise DomainError(f"u={u} must exceed the support endpoint {law.lower}")
    ls_u = float(law.log_sf(u))
    end = float(_isf_log(law, ls_u - TAIL_CUTOFF_NATS)[0])
    span = end - u
    if not span > 0:
        raise QuadratureFailure(f"degenerate tail span at u={u}")
    edges = u + span * np.concatenate([[0.0], np.logspace(-12, 0, 49)])
    log_int = log_integrate(lambda s: law.log_sf(s) - ls_u, edges, rtol=rtol)
    return math.exp(-log_int)


def scaling_function_w(law, u, method="auto"):
    """Scaling function ``w(u)`` of the Gumbel max-domain of attraction.

    ``method="auto"`` returns the family's closed form when it has one and the
    quadrature value otherwise; ``"quadrature"`` forces the numerical route.
    """
    if method not in ("auto", "quadrature", "closed"):
        raise ValueError(f"unknown method {method!r}")
    if method != "quadrature":
        w = law.closed_form_w(u)
        if w is not None:
            return float(w) if np.ndim(w) == 0 else w
        if method == "closed":
            raise DomainError(f"{law!r} has no closed-form scaling function")
    if np.ndim(u) == 0:
        return scaling_function_w_quadrature(law, u)
    return np.array([scaling_function_w_quadrature(law, v) for v in np.ravel(u)]).reshape(
        np.shape(u)
    )


def mda_diagnostic(law, u_grid, x_grid, method="auto"):
    """Deviation of ``sf(u + x / w(u)) / sf(u)`` from ``exp(-x)``.

    Returns an array of shape ``(len(u_grid), len(x_grid))``.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if u_grid.size == 0 or x_grid.size == 0:
        raise ValueError("grids must be non-empty")
    out = np.empty((u_grid.size, x_grid.size))
    for i, u in enumerate(u_grid):
        w = scaling_function_w(law, u, method=method)
        ratio = np.exp(law.log_sf(u + x_grid / w) - law.log_sf(u))
        out[i] = ratio - np.exp(-x_grid)
    return out


@dataclass(frozen=True, eq=False)
class EllipticalModel:
    """``X = R * L @ U`` for a correlation matrix and a radial law."""

    sigma: CorrelationMatrix
    radial: RadialLaw
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.sigma, CorrelationMatrix):
            object.__setattr__(self, "sigma", validate_correlation(self.sigma))
        object.__setattr__(self, "chol", self.sigma.chol)

    @property
    def k(self):
        return self.sigma.k

    @classmethod
    def bivariate(cls, rho, radial):
        return cls(bivariate_correlation(rho), radial)

    @classmethod
    def equicorrelated(cls, k, rho, radial):
        return cls(equicorrelation(k, rho), radial)

    def to_dict(self):
        return {"radial": self.radial.to_dict(), "correlation": self.sigma.entries.tolist()}
