"""Experiment runner: config validation, suite dispatch, reports.

Configs are single JSON documents validated against a schema.  Reports are
JSON-lines files (one provenance record, then one record per check) plus a
flat CSV; all floats are canonicalized to 10 significant digits so a fixed
seed reproduces the report byte for byte.  BLAS pools are pinned to one
thread while a suite runs, which keeps reductions identical whatever the
ambient thread configuration; the requested worker count is recorded in the
provenance and only governs outer trial loops.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from .calculus import psi_make
from .grids import TGrid, covering_tgrid
from .operator import (SectorialOperator, build_divergence_form,
                       constant_coefficients, random_coefficients)
from .space import MetricMeasureSpace, build_grid_space

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    import contextlib

    def threadpool_limits(limits=None):
        return contextlib.nullcontext()


class ConfigError(ValueError):
    """Config failed schema validation or names an unknown suite."""


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["suite", "seed", "space", "operator"],
    "additionalProperties": False,
    "properties": {
        "suite": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "target": {"type": "string"},
        "space": {
            "type": "object",
            "required": ["dims", "spacing", "topology"],
            "additionalProperties": False,
            "properties": {
                "dims": {"type": "array", "items": {"type": "integer", "minimum": 1},
                         "minItems": 1},
                "spacing": {"type": "number", "exclusiveMinimum": 0},
                "topology": {"enum": ["periodic", "bounded"]},
            },
        },
        "operator": {
            "type": "object",
            "required": ["kind", "boundary", "coefficients"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["divergence_form"]},
                "boundary": {"enum": ["periodic", "dirichlet"]},
                "coefficients": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["constant", "random"]},
                        "value": {"type": "array", "items": {"type": "number"},
                                  "minItems": 2, "maxItems": 2},
                        "real_range": {"type": "array", "items": {"type": "number"},
                                       "minItems": 2, "maxItems": 2},
                        "imag_amplitude": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
        "psi": {"$ref": "#/$defs/symbol"},
        "psi_tilde": {"$ref": "#/$defs/symbol"},
        "tgrid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q": {"type": "integer", "minimum": 1},
                "lo": {"type": "number", "exclusiveMinimum": 0},
                "hi": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "R": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "trials": {"type": "integer", "minimum": 1},
        "tolerances": {"type": "object"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
    "$defs": {
        "symbol": {
            "type": "object",
            "required": ["family", "a"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["exp_monomial", "rational"]},
                "a": {"type": "number", "exclusiveMinimum": 0},
                "b": {"type": "number", "exclusiveMinimum": 0},
                "scale": {"type": "number"},
            },
        },
    },
}


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    from .suites import SUITES
    if config["suite"] not in SUITES:
        raise ConfigError(f"unknown suite {config['suite']!r}; "
                          f"known: {sorted(SUITES)}")
    return config


def load_config(path) -> dict:
    with open(path) as fh:
        return validate_config(json.load(fh))


# -- builders ---------------------------------------------------------------


def build_space(config: dict) -> MetricMeasureSpace:
    s = config["space"]
    return build_grid_space(s["dims"], s["spacing"], s["topology"])


def build_operator(config: dict, space: MetricMeasureSpace,
                   rng: np.random.Generator) -> SectorialOperator:
    o = config["operator"]
    c = o["coefficients"]
    dims = config["space"]["dims"]
    if c["kind"] == "constant":
        re, im = c.get("value", [1.0, 0.0])
        coeffs = constant_coefficients(dims, o["boundary"], complex(re, im))
    else:
        coeffs = random_coefficients(dims, o["boundary"], rng,
                                     real_range=tuple(c.get("real_range", [1.0, 2.0])),
                                     imag_amplitude=c.get("imag_amplitude", 0.0))
    return build_divergence_form(space, coeffs, o["boundary"])


def build_symbol(config: dict, key: str, default: dict):
    d = config.get(key, default)
    return psi_make(d["family"], d["a"], d.get("b"), d.get("scale", 1.0))


def build_tgrid(config: dict, op: SectorialOperator,
                power: float | None = None) -> TGrid:
    t = config.get("tgrid", {})
    if "delta" in t and "R" in t:
        return TGrid(t["delta"], t["R"], t.get("q", 16))
    return covering_tgrid(op, q=t.get("q", 16), lo=t.get("lo", 1e-3),
                          hi=t.get("hi", 1e3), power=power)


# -- report records -----------------------------------------------------------


@dataclass
class CheckRecord:
    """One measured quantity compared against its acceptance threshold."""

    name: str
    value: float | bool
    threshold: float | bool
    cmp: str  # "<=", ">=", "==", "bool"
    passed: bool
    anchor: str
    details: dict = field(default_factory=dict)

    @classmethod
    def le(cls, name, value, threshold, anchor, **details):
        return cls(name, value, threshold, "<=", bool(value <= threshold),
                   anchor, details)

    @classmethod
    def ge(cls, name, value, threshold, anchor, **details):
        return cls(name, value, threshold, ">=", bool(value >= threshold),
                   anchor, details)

    @classmethod
    def ok(cls, name, flag, anchor, **details):
        return cls(name, bool(flag), True, "bool", bool(flag), anchor, details)


@dataclass
class ExperimentReport:
    suite: str
    records: list
    provenance: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def to_jsonl(self) -> str:
        lines = [_dumps({"type": "provenance", **self.provenance})]
        for r in self.records:
            lines.append(_dumps({
                "type": "check", "name": r.name, "value": r.value,
                "threshold": r.threshold, "cmp": r.cmp, "passed": r.passed,
                "anchor": r.anchor, "details": r.details}))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["name", "value", "threshold", "cmp", "passed", "anchor"])
        for r in self.records:
            writer.writerow([r.name, _canon_scalar(r.value),
                             _canon_scalar(r.threshold), r.cmp, r.passed,
                             r.anchor])
        return buf.getvalue()

    def write(self, outdir) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.jsonl").write_text(self.to_jsonl())
        (outdir / "checks.csv").write_text(self.to_csv())

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1


def _canon_scalar(x):
    if isinstance(x, bool) or not isinstance(x, float):
        return x
    if math.isnan(x) or math.isinf(x):
        return repr(x)
    return float(f"{x:.10g}")


def _canon(obj):
    if isinstance(obj, dict):
        return {k: _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _canon_scalar(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": _canon_scalar(obj.real), "im": _canon_scalar(obj.imag)}
    if isinstance(obj, float):
        return _canon_scalar(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_canon(obj), sort_keys=True, separators=(",", ":"),
                      allow_nan=True)


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


# -- runner ------------------------------------------------------------------


def run_suite(config: dict) -> ExperimentReport:
    """Validate, execute the named suite, and assemble the report."""
    config = validate_config(config)
    from .suites import SUITES
    suite = config["suite"]
    workers = int(os.environ.get("PARALAB_THREADS", "1"))
    rng = np.random.default_rng(config["seed"])
    with threadpool_limits(limits=1):
        records = SUITES[suite](config, rng)
    provenance = {
        "suite": suite,
        "seed": config["seed"],
        "config_sha256": config_hash(config),
        "workers_requested": workers,
        "blas_pinned": True,
        "versions": {"paralab": "0.1.0", "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    return ExperimentReport(suite, records, provenance)


def refinement_study(config: dict, axis: str, steps: int) -> list[dict]:
    """Re-run a suite along a refinement axis and tabulate check values.

    Axes: ``N`` doubles every space dimension, ``q`` doubles the grid
    resolution, ``trunc`` widens the coverage window by a decade per step.
    """
    if steps < 2:
        raise ConfigError("refinement study needs at least 2 steps")
    if axis not in ("N", "q", "trunc"):
        raise ConfigError(f"unknown refinement axis {axis!r}")
    config = validate_config(config)
    rows = []
    for i in range(steps):
        step_cfg = json.loads(json.dumps(config))
        if axis == "N":
            step_cfg["space"]["dims"] = [d * 2 ** i
                                         for d in config["space"]["dims"]]
            param = int(np.prod(step_cfg["space"]["dims"]))
        elif axis == "q":
            grid = dict(step_cfg.get("tgrid", {}))
            grid["q"] = grid.get("q", 16) * 2 ** i
            step_cfg["tgrid"] = grid
            param = grid["q"]
        else:
            grid = dict(step_cfg.get("tgrid", {}))
            grid["lo"] = grid.get("lo", 1e-3) / 10.0 ** i
            grid["hi"] = grid.get("hi", 1e3) * 10.0 ** i
            step_cfg["tgrid"] = grid
            param = grid["hi"]
        report = run_suite(step_cfg)
        row = {"step": i, "axis": axis, "param": param}
        for r in report.records:
            if isinstance(r.value, (int, float)) and not isinstance(r.value, bool):
                row[r.name] = _canon_scalar(float(r.value))
        rows.append(row)
    return rows


def write_refinement_csv(rows: list[dict], outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    keys = ["step", "axis", "param"]
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    path = outdir / "refinement.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


# -- plot-ready tables ---------------------------------------------------------


def emit_plot_data(report: ExperimentReport, outdir) -> dict:
    """Per-figure CSV tables with a manifest.

    Recognized detail payloads: ``fit_points`` (off-diagonal decay fits),
    ``samples`` (ratio histograms, deterministic 16-bin rule), ``curve``
    (residual-versus-refinement and similar paired arrays).
    """
    outdir = Path(outdir)
    plots = outdir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    manifest = []
    for r in report.records:
        base = r.name.replace("/", "_")
        if "fit_points" in r.details:
            path = plots / f"{base}_fit.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["log1p_dist_ratio", "log_norm"])
                for (_, x, nrm) in r.details["fit_points"]:
                    if nrm > 0:
                        w.writerow([_canon_scalar(float(x)),
                                    _canon_scalar(float(math.log(nrm)))])
            manifest.append({"check": r.name, "kind": "fit", "csv": path.name})
        if "samples" in r.details:
            samples = np.asarray(r.details["samples"], dtype=float)
            if samples.size:
                counts, edges = np.histogram(samples, bins=16)
                path = plots / f"{base}_hist.csv"
                with open(path, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["bin_left", "bin_right", "count"])
                    for i, c in enumerate(counts):
                        w.writerow([_canon_scalar(float(edges[i])),
                                    _canon_scalar(float(edges[i + 1])), int(c)])
                manifest.append({"check": r.name, "kind": "hist",
                                 "csv": path.name})
        if "curve" in r.details:
            curve = r.details["curve"]
            path = plots / f"{base}_curve.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([curve.get("xlabel", "x"), curve.get("ylabel", "y")])
                for x, y in zip(curve["x"], curve["y"]):
                    w.writerow([_canon_scalar(float(x)), _canon_scalar(float(y))])
            manifest.append({"check": r.name, "kind": "curve", "csv": path.name})
    manifest_path = plots / "manifest.json"
    manifest_path.write_text(_dumps({"suite": report.suite, "entries": manifest}))
    return {"entries": manifest, "dir": str(plots)}
