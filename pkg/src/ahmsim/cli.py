"""Command-line runner: ``ahmsim run|validate|list-experiments``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_SCHEMA, EXIT_NUMERICAL = 0, 1, 2, 3
ENV_OUT = "AHMSIM_OUT"
CSV_COLUMNS = ("experiment", "series", "site", "time_model", "time_physical_s", "value", "stderr")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_TRANSMON = {"oneOf": [
    {"type": "string"},
    _obj({"f01_ghz": _POS, "f12_ghz": _POS, "f23_ghz": _POS, "T1_01_us": _POS, "T2_01_us": _POS,
          "T1_12_us": _POS, "T2_12_us": _POS}, ("f01_ghz", "f12_ghz")),
]}

SCHEMA = _obj({
    "schema_version": {"const": "1"},
    "experiment": {"enum": ["single-analog", "two-analog-digital", "three-transmon", "digital-trotter",
                            "string-breaking", "calibrate", "resources"]},
    "seed": {"type": "integer", "minimum": 0},
    "output_dir": {"type": "string"},
    "initial_state": {"type": "string", "pattern": r"^(auto|\|?[0-2]+>?)$"},
    "exact_max_sites": {"type": "integer", "minimum": 0},
    "model": _obj({"kappa_over_2pi": _NUM, "chi_over_2pi": _NUM, "beta_over_2pi": _NUM,
                   "n_sites": _POS_INT, "scale_freq_hz": _POS}),
    "times": _obj({"t_max": _POS, "n_points": {"type": "integer", "minimum": 2}}),
    "trotter": _obj({"dt": _POS, "n_steps": {"type": "integer", "minimum": 0}}),
    "schedule": _obj({"T_E_ns": _NUM, "N": {"type": "integer", "minimum": 0}, "r": {"type": "number",
                      "minimum": 0, "maximum": 0.5}, "T_g_ns": {"type": "number", "minimum": 0},
                      "gate_mode": {"enum": ["instantaneous", "multitone"]},
                      "mode": {"enum": ["effective_segments", "full_pulse"]}}),
    "device": _obj({
        "preset": {"enum": ["reference"]},
        "transmons": {"type": "array", "items": _TRANSMON, "minItems": 1},
        "couplings_mhz": {"type": "array", "items": _NUM},
        "stark": _obj({"omega_S_ghz": _POS, "amplitude_mhz": {"oneOf": [_POS, {"const": "calibrate"}]},
                       "dphi": _NUM}),
        "tones": {"type": "array", "items": _obj({"freq_ghz": _POS, "amplitudes_mhz": {
            "type": "array", "items": _NUM}}, ("freq_ghz", "amplitudes_mhz"))},
    }),
    "calibration": _obj({"grid_mhz": {"type": "array", "items": _POS, "minItems": 3}}),
    "noise": _obj({"lindblad": {"type": "boolean"},
                   "depolarizing_lambda": {"type": "number", "minimum": 0, "maximum": 1},
                   "overrotation_angle": _NUM}),
    "mitigation": _obj({"n_twirls": _POS_INT, "shots": _POS_INT}),
}, ("experiment",))


class SchemaError(Exception):
    pass


def schema_errors(cfg):
    from jsonschema import Draft202012Validator

    errs = sorted(Draft202012Validator(SCHEMA).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    return [("/".join(str(p) for p in e.absolute_path) or "<root>", e.message) for e in errs]


def load_config(target):
    """A JSON config path, or a bare experiment name meaning all defaults."""
    from .experiments import EXPERIMENTS

    path = Path(target)
    if path.is_file():
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"<file>: invalid JSON ({exc})") from exc
    if target in EXPERIMENTS:
        return {"schema_version": "1", "experiment": target}
    raise SchemaError(f"<root>: {target!r} is neither a config file nor an experiment name")


def apply_overrides(cfg, args):
    cfg = dict(cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "sites", None) is not None:
        cfg["model"] = {**cfg.get("model", {}), "n_sites": args.sites}
        if cfg.get("experiment") == "string-breaking" and "initial_state" not in cfg:
            cfg["initial_state"] = "auto"
    if getattr(args, "steps", None) is not None:
        if cfg.get("experiment") in ("two-analog-digital", "three-transmon"):
            cfg["schedule"] = {**cfg.get("schedule", {}), "N": args.steps}
        else:
            cfg["trotter"] = {**cfg.get("trotter", {}), "n_steps": args.steps}
    return cfg


def _prepare(target, args):
    from .errors import ConfigError
    from .experiments import resolve

    cfg = apply_overrides(load_config(target), args)
    errs = schema_errors(cfg)
    if errs:
        raise SchemaError("; ".join(f"{p}: {m}" for p, m in errs))
    try:
        resolved = resolve(cfg)
    except ConfigError as exc:
        raise SchemaError(f"<config>: {exc}") from exc
    errs = schema_errors(resolved)
    if errs:
        raise SchemaError("; ".join(f"{p}: {m}" for p, m in errs))
    return resolved


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(float(x))  # plain repr also for numpy scalars
    if hasattr(x, "item"):
        return repr(x.item())
    return str(x)


def write_outputs(out_dir, rows, report, resolved):
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "data.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n")
    (out_dir / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _jsonable(o):
    import numpy as np

    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _check_finite(rows):
    for r in rows:
        for v in r[3:]:
            if isinstance(v, float) and not math.isfinite(v):
                raise ArithmeticError(f"non-finite value in series {r[1]!r}")


def cmd_run(args):
    from .errors import AhmError, CapacityError, ConfigError, NumericalError
    from .experiments import RUNNERS, SCHEMA_VERSION

    resolved = _prepare(args.config, args)
    name = resolved["experiment"]
    out_root = args.out or resolved.get("output_dir") or os.environ.get(ENV_OUT) or "ahmsim_out"
    out_dir = Path(out_root) if (args.out or resolved.get("output_dir")) else Path(out_root) / name
    t0 = time.perf_counter()
    try:
        rows, report = RUNNERS[name](resolved)
        _check_finite(rows)
    except (NumericalError, CapacityError, ArithmeticError) as exc:
        print(f"error: numerical failure in {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"schema error: <config>: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except AhmError as exc:
        print(f"error: {name}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    report = {"schema_version": SCHEMA_VERSION, "experiment": name, "seed": resolved["seed"],
              "n_rows": len(rows), "elapsed_s": round(time.perf_counter() - t0, 3), **report}
    write_outputs(out_dir, rows, report, resolved)
    print(f"{name}: {len(rows)} rows -> {out_dir}")
    return EXIT_OK


def cmd_validate(args):
    from .experiments import diagnostics

    resolved = _prepare(args.config, args)
    diags = diagnostics(resolved)
    print(json.dumps(diags, indent=2))
    return EXIT_NUMERICAL if any(d["level"] == "error" for d in diags) else EXIT_OK


def cmd_list(args):
    from .experiments import REGISTRY

    if args.json:
        print(json.dumps([e.__dict__ for e in REGISTRY], indent=2))
    else:
        for e in REGISTRY:
            print(f"{e.name:20s} {e.description}  [{e.reproduces}]")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="ahmsim", description=__doc__)
    ap.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP threads")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("validate", cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("config", help="config JSON path or experiment name")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--sites", type=int, help="override model.n_sites")
        p.add_argument("--steps", type=int, help="override Trotter steps or Floquet periods N")
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="BLAS/OpenMP threads")
        if name == "run":
            p.add_argument("--out", help=f"output directory (default ${ENV_OUT}/<experiment>)")
        p.set_defaults(func=fn)
    p = sub.add_parser("list-experiments")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_list)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
