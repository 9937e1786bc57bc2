"""Command-line front end.

``taildep simulate|estimate|alpha|oracle|verify --config <path> [--out <path>]
[--seed <u64>] [--kn <int>]``

Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from itertools import combinations
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .alpha import solve_alpha, trivariate_alpha
from .estimators import (
    EllipticalTailEstimator,
    default_kn,
    empirical_chi,
    empirical_s,
)
from .exceptions import DomainError, InvalidCorrelation, TailDepError
from .model import (
    EllipticalModel,
    equicorrelation,
    radial_from_dict,
    validate_correlation,
)
from .oracle import fit_slope, s_tilde
from .report import ConfigError, dumps, format_csv, make_report, parse_csv, validate_config
from .sampling import sample_elliptical
from .theory import bivariate_index, partial_index, stilde_expansion

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
COMMANDS = ("simulate", "estimate", "alpha", "oracle", "verify")

# Keys each command accepts; anything else in the config is rejected.
ALLOWED = {
    "simulate": {"model", "n", "seed"},
    "estimate": {"input", "k_n", "subsets", "xy", "u_grid", "chi_levels"},
    "alpha": {"model", "subsets", "theta"},
    "oracle": {"model", "subsets", "u_grid", "xy"},
    "verify": {"level", "convention", "criteria"},
}


class RuntimeFailure(RuntimeError):
    """Failure during computation (maps to exit code 3)."""


# --------------------------------------------------------------------------
# Configuration


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def build_model(block, need_radial=True):
    """Model from its config block, plus the canonical echo of that block."""
    if "correlation" in block:
        sigma = validate_correlation(block["correlation"])
    else:
        dim = block.get("dim", 2)
        sigma = equicorrelation(dim, block["rho"])
    echo = {"correlation": sigma.entries.tolist()}
    if "radial" not in block:
        if need_radial:
            raise ConfigError("model.radial is required for this command")
        return sigma, None, echo
    law = radial_from_dict(block["radial"])
    echo = {"radial": law.to_dict(), **echo}
    return sigma, EllipticalModel(sigma, law), echo


def _subsets(cfg, k, default):
    subs = cfg.get("subsets", default)
    out = []
    for s in subs:
        if max(s) > k:
            raise ConfigError(f"subset {s} refers to a column beyond {k}")
        out.append(tuple(sorted(i - 1 for i in s)))
    return out, [sorted(s) for s in subs]


def resolve(command, raw, args, base_dir):
    cfg = dict(raw)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.kn is not None:
        cfg["k_n"] = args.kn
    validate_config(cfg)
    extra = sorted(set(cfg) - ALLOWED[command])
    if extra:
        raise ConfigError(f"{command} does not use the setting(s): {', '.join(extra)}")
    ctx = {}
    out = {}
    if command in ("simulate", "alpha", "oracle"):
        if "model" not in cfg:
            raise ConfigError(f"{command} needs a model")
        sigma, model, echo = build_model(cfg["model"], need_radial=command != "alpha")
        ctx.update(sigma=sigma, model=model)
        out["model"] = echo
    if command == "simulate":
        out["n"] = cfg.get("n", 1000)
        out["seed"] = cfg.get("seed", 0)
    elif command == "estimate":
        if "input" not in cfg:
            raise ConfigError("estimate needs an input CSV path")
        src = Path(cfg["input"])
        if not src.is_absolute():
            src = base_dir / src
        try:
            text = src.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read input {src}: {exc.strerror}") from None
        data = parse_csv(text, str(src))
        n, k = data.shape
        ctx["data"] = data
        out["input"] = cfg["input"]
        out["k_n"] = cfg.get("k_n") or default_kn(n)
        ctx["subsets"], out["subsets"] = _subsets(
            cfg, k, [list(range(1, k + 1))] if k >= 3 else [])
        out["xy"] = cfg.get("xy", [[1.0, 1.0], [0.5, 0.5], [2.0, 2.0]])
        out["u_grid"] = cfg.get("u_grid", [u for u in (10.0, 20.0, 50.0, 100.0) if u <= n / 10])
        bad = [u for u in out["u_grid"] if u > n / 10]
        if bad:
            raise ConfigError(f"u_grid values {bad} exceed n/10 = {n / 10:g}")
        out["chi_levels"] = cfg.get("chi_levels", [0.9, 0.95, 0.99])
    elif command == "alpha":
        k = ctx["sigma"].k
        ctx["subsets"], out["subsets"] = _subsets(cfg, k, [list(range(1, k + 1))])
        theta = cfg.get("theta")
        if theta is None and ctx["model"] is not None:
            theta = ctx["model"].radial.theta
        if theta is None:
            raise ConfigError("alpha needs theta (the radial law has no tail coefficient)")
        out["theta"] = float(theta)
    elif command == "oracle":
        k = ctx["model"].k
        if k not in (2, 3):
            raise ConfigError("the oracle supports models of dimension 2 or 3")
        ctx["subsets"], out["subsets"] = _subsets(cfg, k, [list(range(1, k + 1))])
        if len(ctx["subsets"]) != 1:
            raise ConfigError("oracle takes exactly one subset")
        m = len(ctx["subsets"][0])
        out["u_grid"] = cfg.get("u_grid", [1e2, 1e3, 1e4, 1e5, 1e6])
        out["xy"] = cfg.get("xy", [[0.5] * m, [2.0] * m])
        if any(len(x) != m for x in out["xy"]):
            raise ConfigError(f"every xy entry needs {m} values")
        if any(u <= max(max(x) for x in out["xy"]) for u in out["u_grid"]):
            raise ConfigError("every u must exceed the largest x")
    elif command == "verify":
        out["level"] = cfg.get("level", "quick")
        out["convention"] = cfg.get("convention", "adopted")
        out["criteria"] = cfg.get("criteria", sorted(verify_mod.CHECKS))
    validate_config(out)
    return out, ctx


# --------------------------------------------------------------------------
# Commands


def _sidecar(path):
    p = Path(path)
    return p.with_suffix(".json") if p.suffix != ".json" else p.with_name(p.name + ".sidecar.json")


def cmd_simulate(cfg, ctx, out_path):
    if out_path is None:
        raise ConfigError("simulate needs --out for the CSV")
    sample = sample_elliptical(ctx["model"], cfg["n"], cfg["seed"])
    Path(out_path).write_text(format_csv(sample.data), encoding="utf-8")
    report = make_report("simulate", cfg, rows=sample.n, columns=sample.k,
                         csv=Path(out_path).name)
    _sidecar(out_path).write_text(dumps(report), encoding="utf-8")
    return report


def cmd_estimate(cfg, ctx):
    data = ctx["data"]
    n, k = data.shape
    est = EllipticalTailEstimator(k_n=cfg["k_n"], subsets=ctx["subsets"]).fit(data)
    pairs = [{"i": a + 1, "j": b + 1, "tau": est.tau_[a, b], "rho": est.rho_[a, b],
              "eta": est.eta_[a, b]} for a, b in combinations(range(k), 2)]
    subsets = []
    for s, pe in est.partial_.items():
        sol = pe.solution.to_dict()
        subsets.append({
            "solution": _one_based(sol),
            "eta_adopted": pe.eta_I,
            "eta_literal": pe.eta_literal,
            "pd_repaired": pe.pd_repaired,
            "branch": pe.branch,
            "cross_check": pe.cross_check,
        })
    chi = [{"i": a + 1, "j": b + 1, "p": p, "value": empirical_chi(data, a, b, p)}
           for a, b in combinations(range(k), 2) for p in cfg["chi_levels"]]
    table = []
    groups = list(combinations(range(k), 2)) + [s for s in ctx["subsets"] if len(s) > 2]
    for g in groups:
        for x in cfg["xy"]:
            if len(x) != len(g):
                continue
            for u in cfg["u_grid"]:
                v = empirical_s(data, g, x, u)
                table.append({"index_set": [i + 1 for i in g], "x": x, "u": u,
                              "value": v, "count": int(round(v * n))})
    return make_report(
        "estimate", cfg, n=n, columns=k, pairs=pairs,
        theta={"value": est.theta_, "k_n": est.k_n_, "column": 1},
        c={"literal": est.c_.literal, "corrected": est.c_.corrected},
        subsets=subsets, chi=chi, s_table=table,
    )


def _one_based(sol):
    keep = ("index_set", "active_set", "inactive_set", "y", "mu", "q", "alpha")
    out = {key: sol[key] for key in keep}
    for key in ("index_set", "active_set", "inactive_set"):
        out[key] = [i + 1 for i in out[key]]
    return out


def cmd_alpha(cfg, ctx):
    sigma, theta = ctx["sigma"], cfg["theta"]
    results = []
    for s in ctx["subsets"]:
        sol = solve_alpha(sigma, s)
        p = partial_index(sol, theta)
        branch = None
        if len(s) == 3:
            e = sigma.sub(s)
            branch = trivariate_alpha(e[0, 1], e[0, 2], e[1, 2]).branch
        results.append({
            "solution": _one_based(sol.to_dict()),
            "eta": {"adopted": p.eta_I, "paper-literal": p.eta_literal},
            "gamma": {"adopted": p.gamma, "paper-literal": p.gamma_literal},
            "branch": branch,
        })
    return make_report("alpha", cfg, theta=theta, results=results)


def _grid_allows_slope(u):
    u = np.asarray(u, dtype=float)
    return (u.size >= 5 and np.all(np.diff(u) > 0)
            and math.log10(u[-1] / u[0]) >= 4 - 1e-9)


def cmd_oracle(cfg, ctx):
    model = ctx["model"]
    I = list(ctx["subsets"][0])
    rows = []
    logs = []
    for u in cfg["u_grid"]:
        try:
            ls = s_tilde(model, I, 1.0, u)
            s_u = [{"x": x, "value": math.exp(s_tilde(model, I, x, u) - ls)} for x in cfg["xy"]]
            le = stilde_expansion(model, u).log_general if model.k == 2 and u >= 100 else None
        except (TailDepError, ArithmeticError) as exc:
            raise RuntimeFailure(f"oracle failed at u={u!r}: {exc}") from exc
        logs.append(ls)
        rows.append({
            "u": u,
            "log_stilde": ls,
            "log_expansion": le,
            "ratio": None if le is None else math.exp(ls - le),
            "chi": min(1.0, math.exp(ls + math.log(u))),
            "s_u": s_u,
        })
    slope = None
    if _grid_allows_slope(cfg["u_grid"]):
        fit = fit_slope(cfg["u_grid"], logs)
        slope = {"slope": fit.slope, "intercept": fit.intercept,
                 "max_linear_residual": fit.max_linear_residual}
    expected = None
    theta = model.radial.theta
    if theta is not None:
        if len(I) == 2:
            expected = -1.0 / bivariate_index(model.sigma.entries[I[0], I[1]], theta).eta
        else:
            expected = -1.0 / partial_index(solve_alpha(model.sigma, I), theta).eta_I
    return make_report("oracle", cfg, index_set=[i + 1 for i in I], rows=rows,
                       slope=slope, expected_slope=expected)


def oracle_csv(report):
    xs = [r["x"] for r in report["rows"][0]["s_u"]] if report["rows"] else []
    head = ["u", "log_stilde", "log_expansion", "ratio", "chi"]
    head += ["S_u(" + ";".join(repr(float(v)) for v in x) + ")" for x in xs]
    lines = [",".join(head)]
    for r in report["rows"]:
        vals = [r["u"], r["log_stilde"], r["log_expansion"], r["ratio"], r["chi"]]
        vals += [s["value"] for s in r["s_u"]]
        lines.append(",".join("" if v is None else repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def cmd_verify(cfg, echo):
    results = verify_mod.run_all(cfg["level"], cfg["convention"], cfg["criteria"], echo=echo)
    passed = all(r.passed for r in results)
    echo(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    report = make_report("verify", cfg, passed=passed, criteria=[r.to_dict() for r in results])
    return report, passed


# --------------------------------------------------------------------------
# Entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="taildep",
        description="Residual tail dependence of elliptical vectors.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON configuration file (optional for verify)")
    parser.add_argument("--out", help="output path; reports go to stdout when omitted")
    parser.add_argument("--seed", type=_u64, help="override the seed (simulate)")
    parser.add_argument("--kn", type=_kn, help="override k_n (estimate)")
    return parser


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _kn(text):
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("k_n must be at least 2")
    return v


def _emit(text, out_path):
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


def run(argv):
    args = build_parser().parse_args(argv)
    if args.config is None:
        if args.command != "verify":
            raise ConfigError(f"{args.command} needs --config")
        raw, base = {}, Path.cwd()
    else:
        raw, base = load_config(args.config), Path(args.config).resolve().parent
    try:
        cfg, ctx = resolve(args.command, raw, args, base)
    except (InvalidCorrelation, DomainError, KeyError, TypeError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    if args.command == "simulate":
        cmd_simulate(cfg, ctx, args.out)
        return EXIT_OK
    if args.command == "verify":
        report, passed = cmd_verify(cfg, lambda line: print(line, flush=True))
        if args.out is not None:
            _emit(dumps(report), args.out)
        return EXIT_OK if passed else EXIT_VERIFY
    report = {"estimate": cmd_estimate, "alpha": cmd_alpha, "oracle": cmd_oracle}[
        args.command](cfg, ctx)
    if args.command == "oracle" and args.out is not None and args.out.endswith(".csv"):
        _emit(oracle_csv(report), args.out)
        _sidecar(args.out).write_text(dumps(report), encoding="utf-8")
    else:
        _emit(dumps(report), args.out)
    return EXIT_OK


def main(argv=None):
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2.
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"taildep: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TailDepError as exc:
        print(f"taildep: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        # Settings that pass the schema but not the estimator's preconditions.
        print(f"taildep: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, OSError) as exc:
        print(f"taildep: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
