"""Command-line driver: simulate, estimate, oracle, risk-sweep, calibrate.

Runs are described by a flat ``key = value`` config file (``#`` starts a
comment, lists are comma separated, several x points are separated by ``;``).
Every artifact carries the SHA-256 digest of the parsed config and the tool
version; files are written to a temporary name and renamed into place.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, DomainError
from .estimator import bandwidth_grid, sphere_grid
from .kernels import make_kernel
from .model import IndexVector, ObservationField, TargetFunction, function_library, simulate
from .oracle import oracle_profile
from .risk import RateQuery, calibrate_threshold, config_digest, oracle_ratio, pointwise_risk, rate_psi, \
    slope_regression
from .selector import SelectionConfig, select

log = logging.getLogger("structadapt")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


# -- config -------------------------------------------------------------------

def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _points(s):
    pts = []
    for part in s.split(";"):
        if part.strip():
            p = _floats(part)
            if len(p) != 2:
                raise ValueError(f"point {part!r} needs two coordinates")
            pts.append(p)
    return tuple(pts)


def _bool(s):
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _const(s):
    return "calibrate" if s.strip() == "calibrate" else float(s)


def _opt_int(s):
    return None if s.strip().lower() in ("", "none") else int(s)


# key: (parser, default, help with units)
SCHEMA = {
    "target": (str, "cusp", "link name: constant, cosine, cusp, bump, ramp"),
    "target_params": (_floats, (0.5, 1.0), "link parameters, comma separated"),
    "index_deg": (float, 30.0, "angle of the true index, degrees"),
    "kernel_order": (int, 1, "vanishing-moment order of the kernel, 1..4"),
    "epsilon": (_floats, (0.0625,), "noise levels, comma separated, each in (0, 1)"),
    "n": (int, 256, "cells per side of the observation grid"),
    "r": (float, 2.0, "risk exponent, >= 1"),
    "x": (_points, ((0.0, 0.0),), "estimation points 'x1,x2; x1,x2', in [-1/2, 1/2]^2"),
    "x_grid_size": (_opt_int, None, "if set, use a uniform size x size grid of points instead of x"),
    "threshold_const": (_const, 1.5, "threshold constant C, or 'calibrate'"),
    "n_theta": (int, 512, "directions on the unit circle (even)"),
    "grid_floor_cells": (float, 8.0, "smallest bandwidth, in grid cells"),
    "normalize": (_bool, True, "divide by the discrete kernel mass"),
    "n_reps": (int, 200, "Monte Carlo replications"),
    "calibration_reps": (int, 500, "pure-noise replications for calibration"),
    "c_grid": (_floats, tuple(0.25 * k for k in range(1, 17)), "candidate threshold constants, ascending"),
    "base_seed": (int, 0, "seed of the first replication"),
    "batch": (int, 32, "fields simulated and processed together"),
    "workers": (int, 1, "worker processes for independent jobs"),
    "out_dir": (str, "out", "output directory"),
    "trace_limit": (int, 4096, "R values printed before the trace elides them"),
    "oracle_ratio": (_bool, True, "add the oracle ratio column to risk sweeps"),
    "field_file": (str, "", "estimate on this binary field instead of simulating"),
    "field_format": (str, "bin", "simulate output: bin or csv"),
}


def parse_config(text):
    """Parse the flat format into a dict of typed values (defaults filled in)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in raw:
            raise ConfigurationError(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v
    return build_config(raw)


def build_config(raw):
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    cfg = {}
    for k, (conv, default, _) in SCHEMA.items():
        if k in raw:
            try:
                cfg[k] = conv(raw[k]) if isinstance(raw[k], str) else raw[k]
            except ValueError as e:
                raise ConfigurationError(f"{k}: {e}") from None
        else:
            cfg[k] = default
    validate(cfg)
    return cfg


def validate(cfg):
    function_library(cfg["target"], cfg["target_params"])
    make_kernel(cfg["kernel_order"])
    if not cfg["epsilon"]:
        raise ConfigurationError("epsilon list is empty")
    for e in cfg["epsilon"]:
        if not 0.0 < e < 1.0:
            raise ConfigurationError(f"epsilon {e} outside (0, 1)")
    if cfg["n"] < 64:
        raise ConfigurationError("n must be >= 64")
    if cfg["r"] < 1:
        raise ConfigurationError("r must be >= 1")
    if cfg["n_theta"] < 2 or cfg["n_theta"] % 2:
        raise ConfigurationError("n_theta must be even")
    for p in cfg["x"]:
        if max(abs(p[0]), abs(p[1])) > 0.5:
            raise ConfigurationError(f"x point {p} outside [-1/2, 1/2]^2")
    if cfg["x_grid_size"] is not None and cfg["x_grid_size"] < 1:
        raise ConfigurationError("x_grid_size must be positive")
    c = cfg["threshold_const"]
    if c != "calibrate" and not c >= 0:
        raise ConfigurationError("threshold_const must be >= 0 or 'calibrate'")
    if cfg["n_reps"] < 1 or cfg["calibration_reps"] < 1 or cfg["batch"] < 1 or cfg["workers"] < 1:
        raise ConfigurationError("counts must be positive")
    cg = cfg["c_grid"]
    if not cg or any(b <= a for a, b in zip(cg, cg[1:])):
        raise ConfigurationError("c_grid must be nonempty and ascending")
    if cfg["field_format"] not in ("bin", "csv"):
        raise ConfigurationError("field_format must be bin or csv")


def render_config(cfg):
    """Inverse of parse_config, for embedding configs in artifacts."""
    out = []
    for k, v in cfg.items():
        if k == "x":
            v = "; ".join(f"{a!r}, {b!r}" for a, b in v)
        elif isinstance(v, tuple):
            v = ", ".join(repr(a) for a in v)
        elif v is None:
            v = "none"
        elif isinstance(v, bool):
            v = str(v).lower()
        out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"


# keys that change where or how fast a run goes, never what it computes
EXECUTION_KEYS = ("out_dir", "workers")


def digest(cfg):
    return config_digest({k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()
                          if k not in EXECUTION_KEYS})


# -- helpers ------------------------------------------------------------------

def atomic_write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data if isinstance(data, bytes) else data.encode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _stamp(cfg):
    return {"config_digest": digest(cfg), "tool_version": __version__}


def write_json(path, obj, cfg):
    atomic_write(path, json.dumps({**_stamp(cfg), **obj}, indent=2, default=_jsonable) + "\n")


def write_csv(path, header, rows, cfg):
    buf = io.StringIO()
    st = _stamp(cfg)
    buf.write(f"# config_digest={st['config_digest']} tool_version={st['tool_version']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write(path, buf.getvalue())


def read_csv(path):
    """Rows of an artifact CSV as dicts (comment lines skipped)."""
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, IndexVector):
        return o.angle
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _target(cfg):
    return TargetFunction(function_library(cfg["target"], cfg["target_params"]),
                          IndexVector.from_degrees(cfg["index_deg"]))


def _x_points(cfg):
    if cfg["x_grid_size"] is None:
        return list(cfg["x"])
    from .risk import x_grid
    return x_grid(cfg["x_grid_size"])


def _selection_config(cfg, eps, const):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bw = bandwidth_grid(eps, 2.0 / cfg["n"], cfg["grid_floor_cells"])
    for w in caught:
        log.warning("%s", w.message)
    return SelectionConfig(const, cfg["r"], sphere_grid(cfg["n_theta"]), bw, cfg["normalize"])


def _calibrate(cfg, eps):
    return calibrate_threshold(make_kernel(cfg["kernel_order"]), eps, cfg["n"], cfg["c_grid"],
                               cfg["calibration_reps"], cfg["n_theta"], c_grid_floor=cfg["grid_floor_cells"],
                               batch=cfg["batch"])


def _threshold_const(cfg, eps):
    c = cfg["threshold_const"]
    return _calibrate(cfg, eps).constant if c == "calibrate" else c


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _eps_tag(e):
    return f"{e:.6g}"


# -- subcommands --------------------------------------------------------------

def cmd_simulate(cfg, args):
    out = Path(cfg["out_dir"])
    tg = _target(cfg)
    seed = cfg["base_seed"]
    files = []
    for eps in cfg["epsilon"]:
        f = simulate(tg, eps, cfg["n"], seed)
        stem = f"field_eps{_eps_tag(eps)}_seed{seed}"
        if cfg["field_format"] == "bin":
            path = out / f"{stem}.bin"
            atomic_write(path, f.to_bytes())
        else:
            path = out / f"{stem}.csv"
            buf = io.StringIO()
            f.write_csv(buf)
            atomic_write(path, buf.getvalue())
        files.append({"epsilon": eps, "seed": seed, "path": str(path)})
    manifest = {"command": "simulate", "config": render_config(cfg), "seed": seed, "files": files}
    write_json(out / "simulate.json", manifest, cfg)
    print(json.dumps({"files": [f["path"] for f in files]}))
    return EXIT_OK


def _estimate_one(cfg, field, kernel, x, const):
    scfg = _selection_config(cfg, field.epsilon, const)
    return select(field, kernel, x, scfg)


def cmd_estimate(cfg, args):
    kernel = make_kernel(cfg["kernel_order"])
    seed = cfg["base_seed"]
    if cfg["field_file"]:
        fields = [ObservationField.read_binary(cfg["field_file"])]
    else:
        tg = _target(cfg)
        fields = [simulate(tg, eps, cfg["n"], seed) for eps in cfg["epsilon"]]
    results, full = [], []
    for field in fields:
        const = _threshold_const(cfg, field.epsilon)
        for x in _x_points(cfg):
            tr = _estimate_one(cfg, field, kernel, x, const)
            head = {"epsilon": field.epsilon, "seed": field.seed, "x": list(x), "threshold_const": const}
            results.append({**head, "trace": tr.to_dict(cfg["trace_limit"])})
            full.append({**head, "trace": tr.to_dict()})
    out = Path(cfg["out_dir"])
    base = {"command": "estimate", "config": render_config(cfg), "seed": seed}
    summary = [{k: r[k] for k in ("epsilon", "seed", "x", "threshold_const")} |
               {"estimate": r["trace"]["estimate"], "h_hat": r["trace"]["h_hat"],
                "theta_hat_angle": r["trace"]["theta_hat_angle"], "fell_back": r["trace"]["fell_back"]}
               for r in results]
    write_json(out / "estimate.json", {**base, "results": summary}, cfg)
    if args.dump_trace:
        write_json(args.dump_trace, {**base, "results": full}, cfg)
    print(json.dumps({**_stamp(cfg), "results": results}, default=_jsonable))
    return EXIT_OK


def replay_trace(path):
    """Recompute the estimates recorded in a dumped trace; returns (recorded, recomputed)."""
    doc = json.loads(Path(path).read_text())
    cfg = parse_config(doc["config"])
    if digest(cfg) != doc["config_digest"]:
        raise ConfigurationError("embedded config does not match its digest")
    kernel = make_kernel(cfg["kernel_order"])
    tg = _target(cfg)
    rec, new = [], []
    for r in doc["results"]:
        field = ObservationField.read_binary(cfg["field_file"]) if cfg["field_file"] else \
            simulate(tg, r["epsilon"], cfg["n"], r["seed"])
        tr = _estimate_one(cfg, field, kernel, tuple(r["x"]), r["threshold_const"])
        rec.append(r["trace"]["estimate"])
        new.append(tr.estimate)
    return rec, new


def _oracle_job(cfg, eps):
    kernel = make_kernel(cfg["kernel_order"])
    tg = _target(cfg)
    th = tg.index.components
    rows, prof_rows = [], []
    for x in _x_points(cfg):
        y = float(x[0] * th[0] + x[1] * th[1])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            prof = oracle_profile(kernel, tg.link, y, eps, cfg["r"])
        for w in caught:
            log.warning("%s", w.message)
        ds_h = min(prof.delta_star_at_h.items(), key=lambda kv: abs(kv[0] - prof.h_star))[1]
        rows.append([eps, x[0], x[1], y, prof.h_star, ds_h, prof.risk_bound])
        prof_rows.extend([eps, y, h, ds] for h, ds in sorted(prof.delta_star_at_h.items()))
    return rows, prof_rows


def cmd_oracle(cfg, args):
    out = Path(cfg["out_dir"])
    res = _map(_oracle_job, [(cfg, e) for e in cfg["epsilon"]], cfg["workers"])
    rows = [r for rs, _ in res for r in rs]
    prof = [r for _, ps in res for r in ps]
    write_csv(out / "oracle.csv", ["epsilon", "x1", "x2", "y", "h_star", "delta_star", "risk_bound"], rows, cfg)
    write_csv(out / "oracle_profile.csv", ["epsilon", "y", "h", "delta_star"], prof, cfg)
    print(json.dumps({**_stamp(cfg), "results": [dict(zip(("epsilon", "x1", "x2", "y", "h_star", "delta_star",
                                                                 "risk_bound"), r)) for r in rows]}))
    return EXIT_OK


def _risk_job(cfg, eps):
    kernel = make_kernel(cfg["kernel_order"])
    tg = _target(cfg)
    const = _threshold_const(cfg, eps)
    scfg = _selection_config(cfg, eps, const)
    x = _x_points(cfg)[0]
    rep = pointwise_risk(tg, kernel, scfg, x, cfg["r"], eps, cfg["n"], cfg["n_reps"], cfg["base_seed"],
                         cfg["batch"], min_reps=1)
    ratio = float("nan")
    if cfg["oracle_ratio"]:
        ratio = oracle_ratio(tg, kernel, scfg, x, cfg["r"], eps, cfg["n"], cfg["n_reps"], report=rep)
    return eps, const, rep.risk_value, rep.half_width, ratio


def _link_smoothness(link):
    beta = link.beta if link.beta is not None and math.isfinite(link.beta) else None
    return beta, link.L


def cmd_risk_sweep(cfg, args):
    out = Path(cfg["out_dir"])
    res = _map(_risk_job, [(cfg, e) for e in cfg["epsilon"]], cfg["workers"])
    beta, L = _link_smoothness(function_library(cfg["target"], cfg["target_params"]))
    slope = float("nan")
    if len(res) >= 4 and all(r[2] > 0 for r in res):
        slope = slope_regression([r[0] for r in res], [r[2] for r in res])[0]
    rows = []
    for eps, const, risk, hw, ratio in res:
        rate = rate_psi(RateQuery(beta, L, epsilon=eps)) if beta else float("nan")
        rows.append([eps, beta if beta else float("nan"), L, risk, hw, rate, ratio, slope, const])
    header = ["epsilon", "beta", "L", "risk", "half_width", "rate_formula_value", "ratio", "slope_regression",
              "threshold_const"]
    write_csv(out / "risk_sweep.csv", header, rows, cfg)
    write_json(out / "risk_sweep.json", {"command": "risk-sweep", "config": render_config(cfg),
                                         "seeds": [cfg["base_seed"], cfg["base_seed"] + cfg["n_reps"] - 1],
                                         "slope": slope}, cfg)
    print(json.dumps({**_stamp(cfg), "slope": slope, "rows": [dict(zip(header, r)) for r in rows]}))
    return EXIT_OK


def cmd_calibrate(cfg, args):
    out = Path(cfg["out_dir"])
    res = _map(_calibrate, [(cfg, e) for e in cfg["epsilon"]], cfg["workers"])
    rows = [[r.epsilon, c, a] for r in res for c, a in zip(r.grid, r.acceptance_rate)]
    write_csv(out / "calibration.csv", ["epsilon", "C", "acceptance_rate"], rows, cfg)
    chosen = [{"epsilon": r.epsilon, "threshold_const": r.constant} for r in res]
    write_json(out / "calibration.json", {"command": "calibrate", "config": render_config(cfg),
                                          "chosen": chosen}, cfg)
    print(json.dumps({**_stamp(cfg), "chosen": chosen}))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "oracle": cmd_oracle,
    "risk-sweep": cmd_risk_sweep,
    "calibrate": cmd_calibrate,
}


def _parser():
    ap = argparse.ArgumentParser(prog="structadapt", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("config_path", nargs="?", help="config file (same as --config)")
    ap.add_argument("--config", dest="config_opt", help="config file")
    ap.add_argument("--seed", type=int, help="override base_seed")
    ap.add_argument("--out", help="override out_dir")
    ap.add_argument("--workers", type=int, help="override workers")
    ap.add_argument("--dump-trace", help="estimate: write the full trace to this file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    return ap


def _error(kind, msg, status):
    print(json.dumps({"status": "error", "exit_code": status, "kind": kind, "message": str(msg)}), file=sys.stderr)
    return status


def load(args):
    path = args.config_opt or args.config_path
    if args.config_opt and args.config_path and args.config_opt != args.config_path:
        raise ConfigurationError("config given twice with different paths")
    text = Path(path).read_text() if path else ""
    overrides = []
    for s in args.set:
        if "=" not in s:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {s!r}")
        overrides.append(s)
    if args.seed is not None:
        overrides.append(f"base_seed={args.seed}")
    if args.out is not None:
        overrides.append(f"out_dir={args.out}")
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    # later keys win: drop file lines that are overridden
    keys = {o.split("=", 1)[0].strip() for o in overrides}
    kept = [ln for ln in text.splitlines() if ln.split("#", 1)[0].split("=", 1)[0].strip() not in keys]
    return parse_config("\n".join(kept + overrides))


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    args = _parser().parse_args(argv)
    try:
        cfg = load(args)
    except (ConfigurationError, DomainError, OSError) as e:
        return _error(type(e).__name__, e, EXIT_CONFIG)
    try:
        return COMMANDS[args.subcommand](cfg, args)
    except (ConfigurationError, DomainError) as e:
        return _error(type(e).__name__, e, EXIT_CONFIG)
    except Exception as e:  # noqa: BLE001 - reported as a machine-readable record
        log.exception("run failed")
        return _error(type(e).__name__, e, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
