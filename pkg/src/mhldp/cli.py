"""Batch front-end: ``mhldp <subcommand> --config FILE [--out DIR] [--seed N] [--threads N]``.

Every subcommand reads one JSON document, validates it against a schema
that rejects unknown keys, and writes CSV with fixed headers to ``--out``.
Exit codes: 0 success, 1 numeric failure, 2 configuration error.

Bundled configurations can be named without a path (``--config table``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .exceptions import (
    CoverageError,
    InfeasibleError,
    PreconditionError,
    QuadratureError,
    SizeError,
)
from .grid import GridSpec
from .kernel import FLOAT_FMT, empirical_measure, kernel_from_config, simulate
from .lyapunov import (
    LyapunovCandidate,
    ProbeThresholds,
    classify_regime,
    cross_validate,
    kernel_params,
    paper_candidate,
    probe_limits,
)
from .ergodicity import check_minorization, tv_decay
from .rate import (
    GridChain,
    HalfSpaceEvent,
    discretize,
    ldp_slope_experiment,
    rate_function,
    stationary_distribution,
    write_rate_csv,
)

__all__ = [
    "main",
    "load_config",
    "validate_config",
    "ConfigError",
    "SCHEMAS",
    "bundled_configs",
    "cmd_classify",
    "cmd_probe",
    "cmd_rate",
    "cmd_slope",
    "cmd_ergodicity",
    "cmd_simulate",
]

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Configuration could not be read or failed validation."""


# --------------------------------------------------------------------------
# schemas

_POS = {"type": "number", "exclusiveMinimum": 0}
_INT_POS = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_DEFS = {
    "target": _obj({"eta": _POS, "alpha": _POS}, ["eta", "alpha"]),
    "proposal": {
        "oneOf": [
            _obj({"family": {"const": "independent"}, "gamma": _POS, "beta": _POS}, ["family", "gamma", "beta"]),
            _obj(
                {
                    "family": {"const": "random_walk"},
                    "increment": {"enum": ["gaussian", "ball"]},
                    "scale": _POS,
                    "radius": _POS,
                },
                ["family"],
            ),
            _obj({"family": {"const": "mala"}, "epsilon": _POS}, ["family", "epsilon"]),
        ]
    },
    "quadrature": _obj(
        {
            "abs_tol": _POS,
            "rel_tol": _POS,
            "truncation_mass": _POS,
            "max_subdivisions": _INT_POS,
            "mc_samples": _INT_POS,
            "mc_seed": {"type": "integer", "minimum": 0},
        }
    ),
    "kernel": _obj(
        {
            "dim": _INT_POS,
            "target": {"$ref": "#/$defs/target"},
            "proposal": {"$ref": "#/$defs/proposal"},
            "quadrature": {"$ref": "#/$defs/quadrature"},
        },
        ["target", "proposal"],
    ),
    "axis": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]},
    "grid": _obj(
        {
            "lower": {"$ref": "#/$defs/axis"},
            "upper": {"$ref": "#/$defs/axis"},
            "cells": {"oneOf": [{"type": "integer", "minimum": 2}, {"type": "array", "items": {"type": "integer", "minimum": 2}}]},
            "order": {"type": "integer", "minimum": 1},
        },
        ["lower", "upper", "cells"],
    ),
    "chain": {
        "oneOf": [
            _obj(
                {
                    "matrix": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                    }
                },
                ["matrix"],
            ),
            _obj({"kernel": {"$ref": "#/$defs/kernel"}, "grid": {"$ref": "#/$defs/grid"}}, ["kernel", "grid"]),
        ]
    },
    "candidate": {
        "oneOf": [
            _obj({"kind": {"enum": ["zero", "canonical", "log1p_square"]}}, ["kind"]),
            _obj({"kind": {"const": "radial_power"}, "c": _POS, "p": _POS}, ["kind", "c", "p"]),
        ]
    },
}


def _schema(name, props, required):
    body = _obj({"experiment": {"const": name}, "seed": {"type": "integer", "minimum": 0}, "output": {"type": "string"}, **props}, ["experiment", *required])
    body["$defs"] = _DEFS
    return body


_IMH_PARAMS = _obj({"eta": _POS, "alpha": _POS, "gamma": _POS, "beta": _POS}, ["eta", "alpha", "gamma", "beta"])
_MALA_PARAMS = _obj({"gamma": _POS, "beta": _POS, "epsilon": _POS, "dim": _INT_POS}, ["gamma", "beta", "epsilon"])
_RWM_PARAMS = {"type": "object", "additionalProperties": _POS}


def _cell(family, params):
    return _obj(
        {
            "label": {"type": "string"},
            "family": {"const": family},
            "params": params,
            "expected": {"enum": ["yes", "no", "boundary"]},
        },
        ["family", "params"],
    )


SCHEMAS = {
    "classify": _schema(
        "classify",
        {"cells": {"type": "array", "items": {"oneOf": [_cell("IMH", _IMH_PARAMS), _cell("MALA", _MALA_PARAMS), _cell("RWM", _RWM_PARAMS)]}}},
        ["cells"],
    ),
    "probe": _schema(
        "probe",
        {
            "kernel": {"$ref": "#/$defs/kernel"},
            "candidate": {"$ref": "#/$defs/candidate"},
            "radii": {"type": "array", "items": _POS, "minItems": 3},
            "directions": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1}, "minItems": 1},
            "thresholds": _obj({"proximity": _POS, "separation": _POS, "monotone_slack": {"type": "number", "minimum": 0}}),
        },
        ["kernel", "candidate"],
    ),
    "rate": _schema(
        "rate",
        {
            "chain": {"$ref": "#/$defs/chain"},
            "mus": {
                "type": "array",
                "items": {
                    "oneOf": [
                        {"const": "stationary"},
                        {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                        _obj({"point_mass": {"type": "integer", "minimum": 0}}, ["point_mass"]),
                    ]
                },
            },
            "tolerance": _POS,
            "max_iter": _INT_POS,
        },
        ["chain", "mus"],
    ),
    "slope": _schema(
        "slope",
        {
            "chain": {"$ref": "#/$defs/chain"},
            "event": _obj(
                {
                    "constraints": {
                        "type": "array",
                        "items": _obj({"weights": {"type": "array", "items": {"type": "number"}}, "threshold": {"type": "number"}}, ["weights", "threshold"]),
                    }
                },
                ["constraints"],
            ),
            "n_values": {"type": "array", "items": _INT_POS, "minItems": 1},
            "x0": {"type": "integer", "minimum": 0},
            "mesh_steps": _INT_POS,
        },
        ["chain", "event", "n_values"],
    ),
    "ergodicity": _schema(
        "ergodicity",
        {
            "chain": {"$ref": "#/$defs/chain"},
            "x0": {"type": "integer", "minimum": 0},
            "i_max": _INT_POS,
            "minorization": _obj({"C": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}, "j": _INT_POS}, ["C", "j"]),
        },
        ["chain", "i_max"],
    ),
    "simulate": _schema(
        "simulate",
        {
            "kernel": {"$ref": "#/$defs/kernel"},
            "x0": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "n_steps": _INT_POS,
            "grid": {"$ref": "#/$defs/grid"},
        },
        ["kernel", "x0", "n_steps"],
    ),
}

DEFAULT_OUTPUT = {
    "classify": "verdicts.csv",
    "probe": "probe.csv",
    "rate": "rate.csv",
    "slope": "slope.csv",
    "ergodicity": "tv_decay.csv",
    "simulate": "trace.csv",
}


# --------------------------------------------------------------------------
# loading


def bundled_configs():
    """Names of the configurations shipped with the package."""
    root = resources.files("mhldp") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _resolve(path):
    p = Path(path)
    if p.exists():
        return p.read_text()
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    if p.parent == Path(".") and name in bundled_configs():
        return (resources.files("mhldp") / "configs" / f"{name}.json").read_text()
    raise ConfigError(f"config {path!s} not found (bundled: {', '.join(bundled_configs())})")


def validate_config(cfg, experiment=None):
    """Validate ``cfg`` against the schema of its ``experiment`` key."""
    if not isinstance(cfg, dict) or "experiment" not in cfg:
        raise ConfigError("config must be an object with an 'experiment' key")
    name = cfg["experiment"]
    if experiment is not None and name != experiment:
        raise ConfigError(f"config is for {name!r}, not {experiment!r}")
    if name not in SCHEMAS:
        raise ConfigError(f"unknown experiment {name!r}")
    errors = sorted(Draft202012Validator(SCHEMAS[name]).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")
    return cfg


def load_config(path, experiment=None):
    try:
        cfg = json.loads(_resolve(path))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return validate_config(cfg, experiment)


def _build(fn, *args):
    """Turn constructor-level ``ValueError`` into a configuration error."""
    try:
        return fn(*args)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _grid(cfg, dim):
    def axis(v):
        return list(v) if isinstance(v, list) else [v] * dim

    return GridSpec(tuple(axis(cfg["lower"])), tuple(axis(cfg["upper"])), tuple(axis(cfg["cells"])))


def _chain(cfg):
    if "matrix" in cfg:
        P = np.array(cfg["matrix"], dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ConfigError("chain matrix must be square")
        sums = P.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ConfigError("chain matrix rows must sum to 1")
        return GridChain.explicit(P)
    k = _build(kernel_from_config, cfg["kernel"])
    grid = _build(_grid, cfg["grid"], k.dim)
    return discretize(k, grid, order=cfg["grid"].get("order", 10))


def _candidate(cfg, k):
    kind = cfg["kind"]
    if kind == "zero":
        return LyapunovCandidate.zero()
    if kind == "radial_power":
        return LyapunovCandidate.radial_power(cfg["c"], cfg["p"])
    if kind == "log1p_square":
        return LyapunovCandidate.custom(lambda p: np.log1p(np.sum(p**2, axis=1)), "log(1+|x|^2)")
    U = paper_candidate(k)
    if U is None:
        raise ConfigError("random-walk kernels have no canonical candidate")
    return U


def _fmt(v):
    return format(float(v), FLOAT_FMT)


def _out_path(cfg, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / cfg.get("output", DEFAULT_OUTPUT[cfg["experiment"]])


# --------------------------------------------------------------------------
# subcommands


def cmd_classify(cfg, out_dir=Path("."), seed=None, threads=1, stream=None):
    """Classify each configured cell; prints CSV and writes it to ``out_dir``.

    Exit code 1 when a cell carries an ``expected`` verdict that differs.
    """
    stream = stream or sys.stdout
    header = ["label", "family", "params", "exists_lyapunov", "ldp_conclusion", "on_boundary", "expected", "match", "clause"]
    rows, mismatch = [], False
    for i, cell in enumerate(cfg["cells"]):
        v = _build(classify_regime, cell["family"], cell["params"])
        expected = cell.get("expected", "")
        match = "" if not expected else str(expected == v.exists_lyapunov).lower()
        mismatch |= match == "false"
        params = json.dumps(cell["params"], sort_keys=True, separators=(",", ":"))
        rows.append([cell.get("label", f"cell{i}"), v.family, params, v.exists_lyapunov, v.ldp_conclusion, str(v.on_boundary).lower(), expected, match, v.clause])
    path = _out_path(cfg, out_dir)
    with open(path, "w", newline="") as fh:
        for target in (fh, stream):
            w = csv.writer(target, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    return EXIT_NUMERIC if mismatch else EXIT_OK


def cmd_probe(cfg, out_dir=Path("."), seed=None, threads=1, stream=None):
    """Probe both limit conditions and cross-check against the analytic verdict.

    Writes the probe CSV even when some points fail (exit code 1 then).
    """
    stream = stream or sys.stdout
    k = _build(kernel_from_config, cfg["kernel"])
    U = _candidate(cfg["candidate"], k)
    thr = _build(lambda: ProbeThresholds(**cfg.get("thresholds", {})))
    dirs = cfg.get("directions")
    if dirs is not None and any(len(d) != k.dim for d in dirs):
        raise ConfigError("directions must have the kernel dimension")
    report = _build(probe_limits, k, U, cfg.get("radii"), dirs, thr, threads)
    report.to_csv(_out_path(cfg, out_dir))
    verdict = classify_regime(k.family, kernel_params(k))
    check = cross_validate(verdict, report)
    line = {
        "family": k.family,
        "candidate": U.name,
        "intAto1": report.verdict_intAto1,
        "intexpUato0": report.verdict_intexpUato0,
        "analytic": verdict.exists_lyapunov,
        "cross_check": check.status,
        "diagnostic": check.diagnostic,
        "failures": report.failures,
    }
    print(json.dumps(line, sort_keys=True), file=stream)
    return EXIT_NUMERIC if report.failures else EXIT_OK


def _mu(spec, chain):
    m = chain.size
    if spec == "stationary":
        return stationary_distribution(chain)
    if isinstance(spec, dict):
        if spec["point_mass"] >= m:
            raise ConfigError("point_mass is not a state")
        return np.eye(m)[spec["point_mass"]]
    mu = np.asarray(spec, dtype=float)
    if mu.shape != (m,) or abs(mu.sum() - 1.0) > 1e-9:
        raise ConfigError("mu must be a probability vector on the chain's states")
    return mu


def cmd_rate(cfg, out_dir=Path("."), seed=None, threads=1, stream=None):
    stream = stream or sys.stdout
    chain = _chain(cfg["chain"])
    mus = [_mu(s, chain) for s in cfg["mus"]]
    results = [rate_function(chain, mu, cfg.get("tolerance", 1e-9), cfg.get("max_iter", 100_000)) for mu in mus]
    path = _out_path(cfg, out_dir)
    write_rate_csv(path, mus, results)
    for i, r in enumerate(results):
        print(f"{i} value={_fmt(r.value)} dual={_fmt(r.dual_value)} gap={_fmt(r.gap)}", file=stream)
    return EXIT_OK if all(r.converged or not np.isfinite(r.value) for r in results) else EXIT_NUMERIC


def cmd_slope(cfg, out_dir=Path("."), seed=None, threads=1, stream=None):
    stream = stream or sys.stdout
    chain = _chain(cfg["chain"])
    cons = cfg["event"]["constraints"]
    if any(len(c["weights"]) != chain.size for c in cons):
        raise ConfigError("event weights must have one entry per state")
    event = HalfSpaceEvent(tuple(tuple(c["weights"]) for c in cons), tuple(c["threshold"] for c in cons))
    x0 = cfg.get("x0", 0)
    if x0 >= chain.size:
        raise ConfigError("x0 is not a state")
    rep = ldp_slope_experiment(chain, event, cfg["n_values"], x0=x0, mesh_steps=cfg.get("mesh_steps", 200), threads=threads)
    rep.to_csv(_out_path(cfg, out_dir))
    print(f"inf_rate={_fmt(rep.inf_rate)} s_last={_fmt(rep.s_n[-1])} gap={_fmt(rep.final_gap)}", file=stream)
    return EXIT_OK


def cmd_ergodicity(cfg, out_dir=Path("."), seed=None, threads=1, stream=None):
    stream = stream or sys.stdout
    chain = _chain(cfg["chain"])
    x0 = cfg.get("x0", 0)
    if x0 >= chain.size:
        raise ConfigError("x0 is not a state")
    rep = tv_decay(chain, x0, cfg["i_max"])
    rep.to_csv(_out_path(cfg, out_dir))
    print(f"fitted_r={_fmt(rep.fitted_r)} fitted_R={_fmt(rep.fitted_R)}", file=stream)
    if "minorization" in cfg:
        mn = cfg["minorization"]
        if max(mn["C"]) >= chain.size:
            raise ConfigError("minorization set names a missing state")
        res = check_minorization(chain, mn["C"], mn["j"])
        print(f"minorization={res.status} epsilon={_fmt(res.epsilon)}", file=stream)
    return EXIT_OK


def cmd_simulate(cfg, out_dir=Path("."), seed=None, threads=1, stream=None):
    stream = stream or sys.stdout
    k = _build(kernel_from_config, cfg["kernel"])
    if len(cfg["x0"]) != k.dim:
        raise ConfigError("x0 must have the kernel dimension")
    seed = cfg.get("seed", 0) if seed is None else seed
    trace = simulate(k, np.array(cfg["x0"], dtype=float), cfg["n_steps"], seed)
    path = _out_path(cfg, out_dir)
    trace.to_csv(path)
    if "grid" in cfg:
        grid = _build(_grid, cfg["grid"], k.dim)
        empirical_measure(trace, grid).to_csv(path.with_name(path.stem + "_empirical.csv"))
    print(f"acceptance_rate={_fmt(trace.acceptance_rate)}", file=stream)
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "probe": cmd_probe,
    "rate": cmd_rate,
    "slope": cmd_slope,
    "ergodicity": cmd_ergodicity,
    "simulate": cmd_simulate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mhldp", description="Metropolis-Hastings Lyapunov and LDP experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else name)
        p.add_argument("--config", required=True, help="JSON file or bundled config name")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent evaluations")
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config, args.command)
        return COMMANDS[args.command](cfg, Path(args.out), args.seed, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, CoverageError, InfeasibleError, SizeError, PreconditionError, FloatingPointError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
