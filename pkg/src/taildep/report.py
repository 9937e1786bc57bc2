"""Config and report serialisation: JSON schemas and the CSV sample format."""

from __future__ import annotations

import io
import json
import math
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

REPORT_VERSION = 1


class ConfigError(ValueError):
    """Malformed configuration or input file (maps to exit code 2)."""


@lru_cache(maxsize=None)
def load_schema(name):
    """Published schema ``name`` (``"config"`` or ``"report"``)."""
    path = resources.files("taildep").joinpath("schemas").joinpath(f"{name}.schema.json")
    text = path.read_text("utf-8")
    schema = json.loads(text)
    jsonschema.Draft202012Validator.check_schema(schema)
    return schema


def _validate(obj, name):
    validator = jsonschema.Draft202012Validator(load_schema(name))
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{name} schema violation at {where}: {e.message}")


def validate_config(cfg):
    _validate(cfg, "config")


def validate_report(report):
    _validate(report, "report")
    validate_config(report["config"])


def clean(obj):
    """Convert numpy scalars and arrays to plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(report):
    return json.dumps(clean(report), indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def round_trips(report):
    """True when ``report`` survives serialise, parse, serialise unchanged."""
    text = dumps(report)
    return dumps(json.loads(text)) == text


def make_report(kind, config, **payload):
    report = clean({"kind": kind, "version": REPORT_VERSION, "config": config, **payload})
    validate_report(report)
    return report


# --------------------------------------------------------------------------
# CSV


def format_csv(data):
    """Header ``x1,...,xk`` then one row per sample, shortest round-trip floats."""
    data = np.asarray(data, dtype=float)
    buf = io.StringIO()
    buf.write(",".join(f"x{j + 1}" for j in range(data.shape[1])) + "\n")
    for row in data.tolist():
        buf.write(",".join(repr(v) for v in row) + "\n")
    return buf.getvalue()


def parse_csv(text, source="<csv>"):
    """Parse the sample format; malformed rows are reported with their line number."""
    lines = text.splitlines()
    if not lines:
        raise ConfigError(f"{source}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    k = len(header)
    if k < 2:
        raise ConfigError(f"{source}: need at least 2 columns, found {k}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != k:
            raise ConfigError(f"{source}:{lineno}: expected {k} fields, found {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError(f"{source}:{lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise ConfigError(f"{source}: no data rows")
    return np.array(rows, dtype=float)
