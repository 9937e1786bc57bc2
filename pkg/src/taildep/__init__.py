"""Residual tail dependence of elliptical random vectors.

Closed-form indices, a log-domain quadrature oracle for joint survival
probabilities, the unit-bound quadratic program behind partial indices,
seeded simulation and rank-based estimators.
"""

from .alpha import AlphaSolution, brute_force_alpha, kkt_check, solve_alpha, trivariate_alpha
from .estimators import (
    EllipticalTailEstimator,
    c_hat,
    empirical_s,
    eta_hat_bivariate,
    eta_hat_partial,
    kendall_tau,
    rho_from_tau,
    theta_hat,
)
from .exceptions import (
    ConvergenceFailure,
    DegenerateSample,
    DomainError,
    InsufficientTail,
    InvalidCorrelation,
    NoCertifiedSubset,
    QuadratureFailure,
    TailDepError,
    TailUnderflow,
)
from .model import (
    CorrelationMatrix,
    EllipticalModel,
    ExpScaling,
    GaussianChi,
    KotzTypeIII,
    Lognormal,
    UnitGumbel,
    validate_correlation,
)
from .oracle import joint_survival, marginal_quantile, marginal_survival, rv_slope, s_tilde
from .sampling import SampleMatrix, sample_elliptical, sample_sphere
from .theory import bivariate_index, limit_S, partial_index

__version__ = "0.1.0"
