"""Programmatic acceptance battery.

Each check returns a :class:`CriterionResult` holding the measured values
next to the thresholds they were compared with. ``level="full"`` runs the
batteries at their stated sizes; ``level="quick"`` shrinks the randomised
batteries (matrix and dataset counts) and keeps every tolerance unchanged.

``convention`` selects how the partial index is turned into an expected
regular-variation slope: ``"adopted"`` uses ``eta_I = q**(-theta/2)`` and
``"literal"`` uses ``eta_I = q**(-theta)``. Only the former is consistent
with the oracle, so the literal setting makes the discrimination check fail.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .alpha import (
    brute_force_alpha,
    certified_subsets,
    kkt_check,
    solve_alpha,
    trivariate_alpha,
)
from .estimators import (
    concordance_difference,
    default_kn,
    eta_hat_partial,
    EllipticalTailEstimator,
    theta_hat,
)
from .exceptions import InvalidCorrelation, TailUnderflow
from .model import (
    EllipticalModel,
    ExpScaling,
    GaussianChi,
    KotzTypeIII,
    Lognormal,
    UnitGumbel,
    validate_correlation,
)
from .oracle import joint_survival, rv_slope, s_ratio, s_tilde
from .sampling import sample_elliptical, sample_sphere
from .theory import (
    bivariate_index,
    limit_S,
    log_gaussian_expansion,
    log_kotz_closed_expansion,
    partial_index,
    stilde_expansion,
)

LEVELS = ("quick", "full")
CONVENTIONS = ("adopted", "literal")
SLOPE_GRID = 10.0 ** np.arange(3, 8)
# Differences this small are quadrature noise, not approach to a limit.
ORACLE_RESOLUTION = 1e-8


@dataclass
class CriterionResult:
    cid: int
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        summary = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items()
                            if not isinstance(v, (list, dict)))
        return f"[{tag}] #{self.cid} {self.title}: {summary} ({self.seconds:.1f}s)"

    def to_dict(self):
        return {
            "id": self.cid,
            "title": self.title,
            "passed": bool(self.passed),
            "measured": _jsonable(self.measured),
            "seconds": self.seconds,
        }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _random_correlation(rng, k):
    while True:
        g = rng.standard_normal((k, k + 1))
        s = g @ g.T
        d = np.sqrt(np.diag(s))
        try:
            return validate_correlation(s / np.outer(d, d))
        except InvalidCorrelation:
            continue


def _rel(a, b):
    return abs(a - b) / abs(b)


# --------------------------------------------------------------------------


def check_qp(level="full", seed=1):
    count = 500 if level == "full" else 100
    rng = np.random.default_rng(seed)
    worst_gap = worst_kkt = 0.0
    not_unique = 0
    t0 = time.perf_counter()
    for i in range(count):
        sigma = _random_correlation(rng, 2 + i % 5)
        sol = solve_alpha(sigma)
        worst_gap = max(worst_gap, abs(sol.q - brute_force_alpha(sigma, grid_step=0.01)))
        worst_kkt = max(worst_kkt, kkt_check(sigma, range(sigma.k), sol))
        not_unique += len(certified_subsets(sigma)) != 1
    runtime = time.perf_counter() - t0
    return CriterionResult(
        1, "QP against brute force",
        worst_gap <= 1e-6 and worst_kkt < 1e-8 and not_unique == 0 and runtime < 30,
        {"matrices": count, "max_gap": worst_gap, "max_kkt": worst_kkt,
         "non_unique": not_unique, "runtime_s": runtime},
    )


def check_trivariate(level="full", seed=2):
    count = 200 if level == "full" else 50
    rng = np.random.default_rng(seed)
    worst = 0.0
    mismatched = 0
    branches = {"all": 0, "pair": 0}
    for _ in range(count):
        s = _random_correlation(rng, 3).entries
        closed = trivariate_alpha(s[0, 1], s[0, 2], s[1, 2])
        sol = solve_alpha(s)
        branches[closed.branch] += 1
        mismatched += tuple(closed.active_set) != tuple(sol.active_set)
        worst = max(worst, abs(closed.q - sol.q),
                    float(np.max(np.abs(closed.y - sol.y))))
    ex = trivariate_alpha(-0.5, 0.3, 0.3)
    ok_ex = tuple(ex.active_set) == (0, 1) and abs(ex.q - 4.0) <= 1e-10
    return CriterionResult(
        2, "closed-form trivariate solution",
        worst <= 1e-10 and mismatched == 0 and ok_ex and min(branches.values()) > 0,
        {"matrices": count, "max_diff": worst, "active_set_mismatch": mismatched,
         "branch_all": branches["all"], "branch_pair": branches["pair"],
         "example_q": ex.q, "example_K": [i + 1 for i in ex.active_set]},
    )


def check_scaling_law(level="full"):
    xs = np.array([0.1, 0.5, 1.0, 2.0, 7.0])
    cs = np.array([0.2, 0.5, 1.5, 3.0, 10.0])
    etas = np.array([0.2, 0.5, 0.8, 1.0])
    worst = 0.0
    for x in xs:
        for y in xs:
            for c in cs:
                for e in etas:
                    lhs = limit_S(c * x, c * y, e)
                    rhs = c ** (1.0 / e) * limit_S(x, y, e)
                    worst = max(worst, _rel(lhs, rhs))
    return CriterionResult(3, "homogeneity of the limit function", worst <= 1e-12,
                           {"cases": 500, "max_rel_err": worst})


def check_rv_index(level="full"):
    cases = [(GaussianChi(2), 2.0, r) for r in (0.0, 0.25, 0.5)]
    cases += [(KotzTypeIII(1.0, 0.0, 1.0, th), th, r)
              for th in (1.0, 2.0, 3.0) for r in (-0.3, 0.0, 0.5)]
    t0 = time.perf_counter()
    worst = 0.0
    rows = []
    for law, th, rho in cases:
        fit = rv_slope(EllipticalModel.bivariate(rho, law), [0, 1], SLOPE_GRID)
        target = -1.0 / bivariate_index(rho, th).eta
        dev = _rel(fit.slope, target)
        worst = max(worst, dev)
        rows.append({"law": law.name, "theta": th, "rho": rho,
                     "slope": fit.slope, "target": target})
    runtime = time.perf_counter() - t0
    return CriterionResult(4, "regular-variation index", worst <= 0.05 and runtime < 300,
                           {"models": len(cases), "max_rel_dev": worst,
                            "runtime_s": runtime, "rows": rows})


def check_limit_function(level="full"):
    worst = 0.0
    not_improving = 0
    rows = []
    for th in (1.0, 2.0):
        for rho in (0.0, 0.5):
            m = EllipticalModel.bivariate(rho, KotzTypeIII(1.0, 0.0, 1.0, th))
            eta = bivariate_index(rho, th).eta
            for xy in ((0.5, 0.5), (2.0, 2.0), (0.5, 2.0)):
                lim = limit_S(*xy, eta)
                d6 = abs(s_ratio(m, [0, 1], xy, 1e6) - lim)
                d3 = abs(s_ratio(m, [0, 1], xy, 1e3) - lim)
                worst = max(worst, d6 / lim)
                exact = max(d6, d3) <= ORACLE_RESOLUTION * lim
                not_improving += not (d6 < d3 or exact)
                rows.append({"theta": th, "rho": rho, "xy": list(xy),
                             "rel_err_1e6": d6 / lim, "abs_err_1e3": d3, "abs_err_1e6": d6})
    return CriterionResult(5, "limit function", worst <= 0.10 and not_improving == 0,
                           {"max_rel_err": worst, "not_improving": not_improving, "rows": rows})


def _ratio_discipline(log_ratios):
    """``log_ratios`` at u = 1e4, 1e6, 1e8."""
    r4, r6, r8 = log_ratios
    return (math.log(0.8) <= r6 <= math.log(1.25)) and abs(r8) < abs(r4)


def check_expansions(level="full"):
    gauss_kotz = KotzTypeIII(1.0, 0.0, 0.5, 2.0)
    us = (1e4, 1e6, 1e8)
    worst_a = 0.0
    for rho in (0.25, 0.5):
        for u in us:
            g = log_gaussian_expansion(rho, u)
            worst_a = max(worst_a, abs(math.expm1(log_kotz_closed_expansion(gauss_kotz, rho, u) - g)))
    rows = []
    ok_b = ok_c = True
    for rho in (0.25, 0.5):
        m = EllipticalModel.bivariate(rho, GaussianChi(2))
        lr = [s_tilde(m, [0, 1], 1.0, u) - log_gaussian_expansion(rho, u) for u in us]
        ok = _ratio_discipline(lr)
        ok_b &= ok
        rows.append({"part": "b", "rho": rho, "ratios": [math.exp(v) for v in lr], "ok": ok})
    for th in (1.0, 2.0):
        for rho in (0.25, 0.5):
            m = EllipticalModel.bivariate(rho, KotzTypeIII(1.0, 0.0, 1.0, th))
            lr = [s_tilde(m, [0, 1], 1.0, u) - stilde_expansion(m, u).log_general for u in us]
            ok = _ratio_discipline(lr)
            ok_c &= ok
            rows.append({"part": "c", "theta": th, "rho": rho,
                         "ratios": [math.exp(v) for v in lr], "ok": ok})
    ok_a = worst_a <= 1e-12
    return CriterionResult(6, "asymptotic expansions", ok_a and ok_b and ok_c,
                           {"a_max_rel": worst_a, "a_ok": ok_a, "b_ok": ok_b,
                            "c_ok": ok_c, "rows": rows})


def check_convention(level="full", convention="adopted"):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    m = EllipticalModel.equicorrelated(3, 0.5, KotzTypeIII(1.0, 0.0, 1.0, 1.0))
    p = partial_index(solve_alpha(m.sigma), 1.0)
    adopted, literal = -1.0 / p.eta_I, -1.0 / p.eta_literal
    expected, rival = (adopted, literal) if convention == "adopted" else (literal, adopted)
    slope = rv_slope(m, [0, 1, 2], SLOPE_GRID).slope
    near, far = _rel(slope, expected), _rel(slope, rival)
    return CriterionResult(7, f"convention discrimination ({convention})",
                           near <= 0.05 and far >= 0.15,
                           {"slope": slope, "expected": expected, "rel_dev": near,
                            "rival": rival, "rival_rel_dev": far})


def check_theta_zero(level="full"):
    rows = []
    worst = 0.0
    for rho in (0.0, 0.5):
        fit = rv_slope(EllipticalModel.bivariate(rho, Lognormal(0.0, 1.0)), [0, 1], SLOPE_GRID)
        dev = _rel(fit.slope, -1.0)
        worst = max(worst, dev)
        rows.append({"rho": rho, "slope": fit.slope, "rel_dev": dev})
    return CriterionResult(8, "lognormal radius (theta = 0)", worst <= 0.07,
                           {"max_rel_dev": worst, "rows": rows})


def check_divergent(level="full"):
    m = EllipticalModel.bivariate(0.0, ExpScaling(1.0))
    us = 10.0 ** np.arange(2, 7)
    low = [s_ratio(m, [0, 1], (0.5, 0.5), u) for u in us]
    high = [s_ratio(m, [0, 1], (2.0, 2.0), u) for u in us]
    dec = all(b < a for a, b in zip(low, low[1:]))
    inc = all(b > a for a, b in zip(high, high[1:]))
    drop = low[0] / low[-1]
    return CriterionResult(9, "divergent scaling function",
                           dec and inc and drop >= 10.0,
                           {"decreasing": dec, "increasing": inc, "drop": drop,
                            "S_half": low, "S_two": high})


def check_estimators(level="full", seed=7, n=100_000):
    t0 = time.perf_counter()
    rho_err = eta_err = eta_I_err = theta_err = 0.0
    rows = []
    for law, th in ((GaussianChi(2), 2.0), (KotzTypeIII(1.0, 0.0, 1.0, 1.0), 1.0),
                    (KotzTypeIII(1.0, 0.0, 1.0, 2.0), 2.0)):
        for rho in (0.0, 0.5):
            s = sample_elliptical(EllipticalModel.bivariate(rho, law), n, seed)
            est = EllipticalTailEstimator().fit(s.data)
            truth = bivariate_index(rho, th).eta
            rho_err = max(rho_err, abs(est.rho_[0, 1] - rho))
            eta_err = max(eta_err, abs(est.eta_[0, 1] - truth))
            rows.append({"law": law.name, "theta": th, "rho": rho, "rho_hat": est.rho_[0, 1],
                         "theta_hat": est.theta_, "eta_hat": est.eta_[0, 1], "eta": truth})
    for th in (1.0, 2.0):
        gen = np.random.Generator(np.random.Philox(seed))
        x = gen.exponential(size=n) ** (1.0 / th)
        t_hat = theta_hat(x, default_kn(n))
        theta_err = max(theta_err, _rel(t_hat, th))
        rows.append({"weibull_theta": th, "theta_hat": t_hat})
    for th in (1.0, 2.0):
        for rho in (0.0, 0.5):
            m = EllipticalModel.equicorrelated(3, rho, KotzTypeIII(1.0, 0.0, 1.0, th))
            pe = eta_hat_partial(sample_elliptical(m, n, seed), [0, 1, 2])
            truth = solve_alpha(m.sigma).q ** (-th / 2.0)
            eta_I_err = max(eta_I_err, abs(pe.eta_I - truth))
            rows.append({"theta": th, "rho": rho, "q_hat": pe.q, "eta_I_hat": pe.eta_I,
                         "eta_I": truth})
    runtime = time.perf_counter() - t0
    ok = (rho_err <= 0.02 and theta_err <= 0.15 and eta_err <= 0.05
          and eta_I_err <= 0.07 and runtime < 120)
    return CriterionResult(10, "estimators", ok,
                           {"max_rho_err": rho_err, "max_theta_rel_err": theta_err,
                            "max_eta_err": eta_err, "max_eta_I_err": eta_I_err,
                            "runtime_s": runtime, "rows": rows})


def _reference_difference(x, y):
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    return int(np.triu(sx * sy, 1).sum())


def check_equivalences(level="full", seed=11):
    count = 100 if level == "full" else 20
    rng = np.random.default_rng(seed)
    mismatches = 0
    for i in range(count):
        n = int(rng.integers(2, 2001))
        x = rng.standard_normal(n)
        y = 0.5 * x + rng.standard_normal(n)
        if i % 2:
            # Coarse rounding produces ties in both coordinates.
            x, y = np.round(x, 1), np.round(y, 1)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        mismatches += concordance_difference(x, y) != _reference_difference(x, y)
    gen = np.random.Generator(np.random.Philox(seed))
    norm_err = max(float(np.max(np.abs(np.linalg.norm(sample_sphere(k, 100_000, gen), axis=1) - 1.0)))
                   for k in (2, 3, 5))
    sigma = np.array([[1.0, 0.5, -0.3], [0.5, 1.0, 0.2], [-0.3, 0.2, 1.0]])
    s = sample_elliptical(EllipticalModel(sigma, GaussianChi(3)), 100_000, seed)
    corr_err = float(np.max(np.abs(np.corrcoef(s.data.T) - sigma)))
    return CriterionResult(11, "algorithmic equivalences",
                           mismatches == 0 and norm_err <= 1e-12 and corr_err <= 0.02,
                           {"datasets": count, "kendall_mismatch": mismatches,
                            "max_norm_err": norm_err, "max_corr_err": corr_err})


def check_deep_tail(level="full"):
    laws = [GaussianChi(2), KotzTypeIII(1.0, 0.0, 1.0, 1.0), KotzTypeIII(1.0, 0.0, 1.0, 3.0),
            KotzTypeIII(2.0, 1.5, 0.5, 2.0), Lognormal(0.0, 1.0), ExpScaling(1.0), UnitGumbel()]
    shapes = ((2, -0.3), (2, 0.5), (3, 0.5), (3, -0.2))
    bad = []
    evaluated = 0
    for law in laws:
        for k, rho in shapes:
            m = EllipticalModel.equicorrelated(k, rho, law)
            for u in (1e2, 1e5, 1e8):
                v = s_tilde(m, list(range(k)), 1.0, u)
                evaluated += 1
                if not (math.isfinite(v) and v < 0):
                    bad.append([law.name, k, rho, u, v])
    m = EllipticalModel.bivariate(0.0, GaussianChi(2))
    typed = 0
    for args in ((1.0, 1e300), (1.0, 1e200)):
        try:
            s_tilde(m, [0, 1], *args)
        except TailUnderflow:
            typed += 1
    try:
        joint_survival(m, [0, 1], [60.0, 60.0])
    except TailUnderflow:
        typed += 1
    return CriterionResult(12, "deep-tail robustness", not bad and typed == 3,
                           {"evaluations": evaluated, "non_finite": len(bad),
                            "typed_underflows": f"{typed}/3", "failures": bad})


CHECKS = {
    1: check_qp,
    2: check_trivariate,
    3: check_scaling_law,
    4: check_rv_index,
    5: check_limit_function,
    6: check_expansions,
    7: check_convention,
    8: check_theta_zero,
    9: check_divergent,
    10: check_estimators,
    11: check_equivalences,
    12: check_deep_tail,
}


def run_criterion(cid, level="full", convention="adopted"):
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    if cid not in CHECKS:
        raise ValueError(f"unknown criterion {cid!r}")
    fn = CHECKS[cid]
    t0 = time.perf_counter()
    res = fn(level, convention=convention) if cid == 7 else fn(level)
    res.seconds = time.perf_counter() - t0
    return res


def run_all(level="quick", convention="adopted", ids=None, echo=None):
    """Run the battery; ``echo`` receives each result line as it completes."""
    results = []
    for cid in sorted(CHECKS) if ids is None else ids:
        res = run_criterion(cid, level, convention)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
