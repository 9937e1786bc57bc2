"""Closed-form tail quantities of elliptical vectors with Gumbel-domain radius.

Conventions: ``q`` is the minimum of the unit-bound quadratic program and
``alpha = sqrt(q)``. The residual dependence index of a subvector is
``eta_I = q**(-theta/2)`` and the exponents of the limit function are
``gamma_j = mu_j * alpha**(theta - 2)``. For two coordinates ``q`` reduces to
``2 / (1 + rho)`` and both quantities coincide with the bivariate formulas.
The alternative reading ``eta_I = q**(-theta)``, ``gamma_j = mu_j q**(theta-1)``
is exposed as ``eta_literal`` / ``gamma_literal`` for comparison only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .model import KotzTypeIII, scaling_function_w

RHO_MARGIN = 1e-6


def _check_rho(rho):
    rho = float(rho)
    if not -1.0 + RHO_MARGIN < rho < 1.0 - RHO_MARGIN:
        raise DomainError(f"rho={rho} outside (-1+1e-6, 1-1e-6)")
    return rho


@dataclass(frozen=True)
class BivariateIndex:
    rho: float
    theta: float
    alpha_rho: float
    lambda_rho: float
    eta: float

    def to_dict(self):
        return dict(self.__dict__)


def bivariate_index(rho, theta):
    """Residual dependence index ``eta = ((1 + rho) / 2)**(theta / 2)`` and friends."""
    rho = _check_rho(rho)
    theta = float(theta)
    if not theta >= 0:
        raise DomainError(f"theta={theta} must be non-negative")
    return BivariateIndex(
        rho=rho,
        theta=theta,
        alpha_rho=math.sqrt(2.0 / (1.0 + rho)),
        lambda_rho=math.sqrt(2.0 * (1.0 + rho)),
        eta=((1.0 + rho) / 2.0) ** (theta / 2.0),
    )


def limit_S(x, y, eta):
    """Limit ``(x y)**(1 / (2 eta))`` of ``S~_u(x, y) / S~_u(1, 1)``."""
    return (x * y) ** (1.0 / (2.0 * eta))


@dataclass(frozen=True, eq=False)
class PartialIndex:
    solution: object
    theta: float
    eta_I: float
    gamma: np.ndarray
    eta_literal: float
    gamma_literal: np.ndarray

    @property
    def index(self):
        """Regular-variation index ``-1 / eta_I`` of ``S~_{u,I}(1)``."""
        return -1.0 / self.eta_I

    def limit(self, x):
        """``prod_{j in K} x_j**gamma_j``; ``x`` is indexed like ``solution.index_set``."""
        x = np.asarray(x, dtype=float)
        pos = [self.solution.index_set.index(j) for j in self.solution.active_set]
        return float(np.prod(x[pos] ** self.gamma))

    def to_dict(self):
        return {
            "theta": self.theta,
            "eta_I": self.eta_I,
            "gamma": [float(g) for g in self.gamma],
            "eta_literal": self.eta_literal,
            "gamma_literal": [float(g) for g in self.gamma_literal],
        }


def partial_index(sol, theta):
    theta = float(theta)
    if not theta >= 0:
        raise DomainError(f"theta={theta} must be non-negative")
    q = sol.q
    alpha = math.sqrt(q)
    mu = np.asarray(sol.mu, dtype=float)
    return PartialIndex(
        solution=sol,
        theta=theta,
        eta_I=q ** (-theta / 2.0),
        gamma=mu * alpha ** (theta - 2.0),
        eta_literal=q ** (-theta),
        gamma_literal=mu * q ** (theta - 1.0),
    )


def log_gaussian_expansion(rho, u):
    """Log of the Gaussian joint-tail display for ``S~_u(1, 1)``."""
    rho = _check_rho(rho)
    u = float(u)
    if not u > math.e:
        raise DomainError("the Gaussian expansion needs u > e")
    c = rho / (1.0 + rho)
    return (
        1.5 * math.log1p(-rho * rho)
        - 2.0 * math.log1p(-rho)
        - c * math.log(4.0 * math.pi)
        - c * math.log(math.log(u))
        - 2.0 / (1.0 + rho) * math.log(u)
    )


def gaussian_expansion(rho, u):
    return math.exp(log_gaussian_expansion(rho, u))


def _need_kotz(law):
    if not isinstance(law, KotzTypeIII):
        raise DomainError(f"expected a Kotz Type III law, got {law!r}")


def kotz_marginal_tail(law, u):
    """Log of the asymptote ``K / sqrt(2 pi r theta) u**(N - theta/2) exp(-r u**theta)``.

    Describes the coordinate of a bivariate Kotz vector.
    """
    _need_kotz(law)
    u = float(u)
    if not u > 0:
        raise DomainError("u must be positive")
    K, N, r, th = law.K, law.N, law.r, law.theta
    return (math.log(K) - 0.5 * math.log(2.0 * math.pi * r * th)
            + (N - th / 2.0) * math.log(u) - r * u**th)


def kotz_b_of_u(law, u):
    """Two-term expansion of the marginal ``1 - 1/u`` quantile of a bivariate Kotz vector."""
    _need_kotz(law)
    u = float(u)
    if u < 100:
        raise DomainError("the quantile expansion is meant for u >= 100")
    K, N, r, th = law.K, law.N, law.r, law.theta
    lu = math.log(u)
    lead = (lu / r) ** (1.0 / th)
    corr = ((N - th / 2.0) * math.log(lu / r) / th + math.log(K)
            - 0.5 * math.log(2.0 * math.pi * r * th))
    return lead * (1.0 + corr / (th * lu))


def _log_prefactor(rho):
    return (math.log(2.0 / (1.0 + rho)) + 1.5 * math.log1p(-rho * rho)
            - math.log(2.0 * math.pi) - 2.0 * math.log1p(-rho))


def log_kotz_closed_expansion(law, rho, u):
    """Fully explicit Kotz display of ``log S~_u(1, 1)`` with ``lambda = alpha**theta``."""
    _need_kotz(law)
    rho = _check_rho(rho)
    u = float(u)
    K, N, r, th = law.K, law.N, law.r, law.theta
    alpha = math.sqrt(2.0 / (1.0 + rho))
    lam = alpha**th
    return (
        (N - th + 2.0) * math.log(alpha)
        + 1.5 * math.log1p(-rho * rho)
        + (lam - 1.0) * N / th * math.log(r)
        - math.log(K)
        - 2.0 * math.log1p(-rho)
        + (1.0 - lam / 2.0) * math.log(K * K / (2.0 * math.pi * th))
        + ((1.0 - lam) * N / th + lam / 2.0 - 1.0) * math.log(math.log(u))
        - lam * math.log(u)
    )


@dataclass(frozen=True)
class StildeExpansion:
    u: float
    b_star: float
    log_general: float
    log_kotz_closed: float | None

    def to_dict(self):
        return dict(self.__dict__)


def stilde_expansion(model, u):
    """Asymptotic expansion of ``log S~_u(1, 1)`` for a bivariate model.

    The general form uses ``b* = alpha_rho Q^{-1}(1 - 1/u)`` with the exact
    marginal quantile from the oracle and the radial scaling function; Kotz
    models additionally get the closed display.
    """
    from .oracle import marginal_isf_log

    if model.k != 2:
        raise DomainError("stilde_expansion needs a bivariate model")
    u = float(u)
    if u < 100:
        raise DomainError("the expansion is meant for u >= 100")
    rho = _check_rho(model.sigma.entries[1, 0])
    law = model.radial
    b_star = math.sqrt(2.0 / (1.0 + rho)) * marginal_isf_log(model, -math.log(u))
    w = scaling_function_w(law, b_star)
    log_general = (_log_prefactor(rho) + float(law.log_sf(b_star))
                   - math.log(b_star) - math.log(w))
    closed = log_kotz_closed_expansion(law, rho, u) if isinstance(law, KotzTypeIII) else None
    return StildeExpansion(u=u, b_star=b_star, log_general=log_general, log_kotz_closed=closed)
