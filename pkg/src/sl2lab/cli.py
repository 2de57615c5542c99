"""Command-line front end.

Usage::

    sl2lab COMMAND CONFIG.yaml [--workers N] [--output DIR]

``COMMAND`` is one of lyapunov, ids, thouless, matchings, tangency, holder,
embed.  The YAML config must contain an integer ``seed``, a system
description and a section named after the command; see the README for the
schema.  Every command writes its results plus ``provenance_<command>.json``
(the resolved config) into the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 enumeration cap exceeded.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import yaml

from . import __version__
from .embed import EnergyFamily, embedding_family, write_decomposition_csv
from .errors import (CapExceeded, DegenerateGap, DegenerateScales, InsufficientSignal,
                     InvalidMeasure, NoneFound, NotConverged, NotHyperbolic,
                     RootCountMismatch, ZeroExponent)
from .matching import find_matchings, find_tangency, is_controlled
from .regularity import (DEFAULT_SCALES, EnergyCurve, IdsProbe, bound_report,
                         halperin_family, holder_scan, lyapunov_curve)
from .tridiag import IdsCurve, finite_ids, thouless_gap
from .walk import FiniteMeasure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4
COMMANDS = ("lyapunov", "ids", "thouless", "matchings", "tangency", "holder", "embed")


class ConfigError(Exception):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def fmt(x):
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# config resolution

def _require(section, key, kind, where, default=None):
    if key not in section:
        if default is not None:
            return default
        raise ConfigError(f"{where}.{key}", "missing")
    val = section[key]
    try:
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise ValueError
            return int(val)
        if kind is float:
            return float(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"expected {kind.__name__}, got {val!r}") from None
    return val


def _energies(entry, where):
    if isinstance(entry, dict):
        num = _require(entry, "num", int, where)
        start = _require(entry, "start", float, where)
        stop = _require(entry, "stop", float, where)
        return np.linspace(start, stop, num)
    try:
        e = np.array(entry, dtype=float).ravel()
    except (TypeError, ValueError):
        raise ConfigError(where, "expected a list of numbers or {start, stop, num}") from None
    if e.size == 0:
        raise ConfigError(where, "empty")
    return e


def _measure(entry, base_dir):
    if isinstance(entry, dict) and "file" in entry:
        path = os.path.join(base_dir, entry["file"])
        try:
            with open(path) as fh:
                entry = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError("measure.file", str(exc)) from None
    try:
        return FiniteMeasure.from_dict(entry)
    except InvalidMeasure as exc:
        raise ConfigError(f"measure.{exc.field}", str(exc).split(": ", 1)[-1]) from None


def resolve_family(cfg, base_dir):
    """The energy family described by ``measure``, ``potentials`` or ``halperin``."""
    if "measure" in cfg:
        return embedding_family(_measure(cfg["measure"], base_dir))
    if "potentials" in cfg:
        entry = cfg["potentials"]
        if not isinstance(entry, dict) or "values" not in entry:
            raise ConfigError("potentials.values", "missing")
        values = np.array(entry["values"], dtype=float)
        probs = entry.get("probs")
        probs = np.full(len(values), 1.0 / len(values)) if probs is None else np.array(probs, float)
        if len(probs) != len(values) or np.any(probs <= 0) or abs(probs.sum() - 1) > 1e-12:
            raise ConfigError("potentials.probs", "must be positive, match values and sum to 1")
        return EnergyFamily.from_potentials(values, probs)
    if "halperin" in cfg:
        ab = cfg["halperin"]
        if not isinstance(ab, dict) or "a" not in ab or "b" not in ab:
            raise ConfigError("halperin", "expected {a, b}")
        return halperin_family(float(ab["a"]), float(ab["b"]))
    raise ConfigError("measure", "one of measure, potentials or halperin is required")


def load_config(path):
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a mapping")
    if "seed" not in cfg:
        raise ConfigError("seed", "missing (a seed is mandatory)")
    seed = _require(cfg, "seed", int, "config")
    if seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    cfg["seed"] = seed
    return cfg


def _section(cfg, name):
    sec = cfg.get(name)
    if not isinstance(sec, dict):
        raise ConfigError(name, "section missing")
    return sec


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# parallel helpers (top level so they pickle)

def _lyap_task(args):
    family, E, n, samples, seed = args
    c = lyapunov_curve(family, [E], n, samples, seed)
    return c.values[0], c.value_stderr[0]


def _thouless_task(args):
    family, E, n, samples, seed, clip = args
    return thouless_gap(family, E, n, samples, seed, clip)


def _ids_task(args):
    family, n, energies, samples, seed = args
    c = finite_ids(family, n, energies, samples, seed)
    return c.values


def _map(fn, tasks, workers):
    """Ordered map; results never depend on the number of workers."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------
# commands; each returns (outputs, resolved section)

def cmd_lyapunov(cfg, family, out, workers):
    sec = _section(cfg, "lyapunov")
    E = _energies(sec.get("energies", [0.0]), "lyapunov.energies")
    n = _require(sec, "n", int, "lyapunov")
    samples = _require(sec, "samples", int, "lyapunov")
    if n < 1 or samples < 2:
        raise ConfigError("lyapunov.samples", "need n >= 1 and samples >= 2")
    seed = cfg["seed"]
    res = _map(_lyap_task, [(family, e, n, samples, seed) for e in E], workers)
    curve = EnergyCurve(E, [r[0] for r in res], [r[1] for r in res],
                        {"kind": "lyapunov", "n": n, "samples": samples, "seed": seed})
    path = os.path.join(out, f"lyapunov_n{n}_samples{samples}_seed{seed}.csv")
    curve.write_csv(path)
    return [path], {"energies": E, "n": n, "samples": samples}


def cmd_ids(cfg, family, out, workers):
    sec = _section(cfg, "ids")
    E = np.sort(_energies(sec.get("energies"), "ids.energies"))
    n = _require(sec, "n", int, "ids")
    samples = _require(sec, "samples", int, "ids")
    if n < 4 or samples < 2:
        raise ConfigError("ids.n", "need n >= 4 and samples >= 2")
    seed = cfg["seed"]
    chunks = [c for c in np.array_split(E, max(1, workers)) if len(c)]
    vals = np.concatenate(_map(_ids_task, [(family, n, c, samples, seed) for c in chunks], workers))
    curve = IdsCurve(E, vals, n, samples, seed)
    path = os.path.join(out, f"ids_n{n}_samples{samples}_seed{seed}.csv")
    curve.write_csv(path)
    return [path], {"energies": E, "n": n, "samples": samples}


def cmd_thouless(cfg, family, out, workers):
    sec = _section(cfg, "thouless")
    E = _energies(sec.get("energies"), "thouless.energies")
    n = _require(sec, "n", int, "thouless")
    samples = _require(sec, "samples", int, "thouless")
    clip = _require(sec, "clip", float, "thouless", 1e-12)
    if n < 2 or samples < 2 or clip <= 0:
        raise ConfigError("thouless.n", "need n >= 2, samples >= 2 and clip > 0")
    seed = cfg["seed"]
    res = _map(_thouless_task, [(family, e, n, samples, seed, clip) for e in E], workers)
    path = os.path.join(out, f"thouless_n{n}_samples{samples}_seed{seed}.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["energy", "L_transfer", "L_thouless", "gap", "transfer_stderr",
                    "thouless_stderr"])
        for e, r in zip(E, res):
            w.writerow([fmt(e), fmt(r.L_transfer), fmt(r.L_thouless), fmt(r.gap),
                        fmt(r.transfer_stderr), fmt(r.thouless_stderr)])
    return [path], {"energies": E, "n": n, "samples": samples, "clip": clip}


def cmd_matchings(cfg, family, out, workers):
    sec = _section(cfg, "matchings")
    k = _require(sec, "k", int, "matchings")
    delta = _require(sec, "delta", float, "matchings")
    samples = _require(sec, "samples", int, "matchings")
    interval = sec.get("interval")
    if not (isinstance(interval, list) and len(interval) == 2):
        raise ConfigError("matchings.interval", "expected [a, b]")
    interval = (float(interval[0]), float(interval[1]))
    if k < 4 or not 0 < delta <= 1 or samples < 1:
        raise ConfigError("matchings.delta", "need k >= 4, 0 < delta <= 1, samples >= 1")
    seed = cfg["seed"]
    res = find_matchings(family, k, delta, interval, samples, seed)
    base = f"matchings_k{k}_samples{samples}_seed{seed}"
    rec_path = os.path.join(out, base + ".jsonl")
    with open(rec_path, "w") as fh:
        for r in res.records:
            fh.write(r.to_json() + "\n")
    sum_path = os.path.join(out, base + "_summary.json")
    _write_json(sum_path, {"v": 1, "measure_estimate": res.measure_estimate,
                           "stderr": res.stderr, "samples": samples,
                           "records": len(res.records)})
    return [rec_path, sum_path], {"k": k, "delta": delta, "samples": samples,
                                  "interval": list(interval)}


def cmd_tangency(cfg, family, out, workers):
    sec = _section(cfg, "tangency")
    E0 = _require(sec, "E0", float, "tangency")
    max_len = _require(sec, "max_len", int, "tangency")
    radius = _require(sec, "E_radius", float, "tangency")
    min_lambda = _require(sec, "min_lambda", float, "tangency")
    powers = tuple(int(p) for p in sec.get("powers", [2, 4, 8, 16, 32, 64]))
    if any(p > 64 or p < 1 for p in powers):
        raise ConfigError("tangency.powers", "powers must lie in 1..64")
    rec = find_tangency(family, E0, max_len, radius, min_lambda, powers=powers)
    path = os.path.join(out, "tangency.jsonl")
    with open(path, "w") as fh:
        fh.write(rec.to_json() + "\n")
    resolved = {"E0": E0, "max_len": max_len, "E_radius": radius, "min_lambda": min_lambda,
                "powers": list(powers)}
    if "control" in sec:
        c = sec["control"]
        ok = is_controlled(rec, float(c["gamma"]), float(c["rho"]), float(c["t"]))
        _write_json(os.path.join(out, "tangency_control.json"), {"controlled": ok, **c})
        resolved["control"] = c
    return [path], resolved


def cmd_holder(cfg, family, out, workers, base_dir="."):
    sec = _section(cfg, "holder")
    E0 = _require(sec, "E0", float, "holder")
    scales = np.array(sec.get("scales", list(DEFAULT_SCALES)), dtype=float)
    seed = cfg["seed"]
    resolved = {"E0": E0, "scales": scales}
    if "curve" in sec:
        path = os.path.join(base_dir, sec["curve"])
        try:
            curve = EnergyCurve.read_csv(path)
        except (OSError, ValueError, IndexError) as exc:
            raise ConfigError("holder.curve", str(exc)) from None
        est = holder_scan(curve, E0, scales)
        out_path = os.path.join(out, f"holder_curve_seed{seed}.json")
        _write_json(out_path, json.loads(est.to_json()))
        resolved["curve"] = os.path.abspath(path)
        return [out_path], resolved
    if family is None:
        raise ConfigError("holder.curve", "either a curve file or a system is required")
    n = _require(sec, "n", int, "holder")
    samples = _require(sec, "samples", int, "holder")
    resolved.update(n=n, samples=samples)
    if sec.get("report", False):
        lyap_n = _require(sec, "lyapunov_n", int, "holder", n)
        rep = bound_report(family, E0, lyap_n, samples, seed, scales, ids_n=n, ids_samples=samples)
        out_path = os.path.join(out, f"bound_report_n{n}_samples{samples}_seed{seed}.json")
        _write_json(out_path, json.loads(rep.to_json()))
        resolved.update(report=True, lyapunov_n=lyap_n)
        return [out_path], resolved
    est = holder_scan(IdsProbe(family, n, samples, seed), E0, scales)
    out_path = os.path.join(out, f"holder_ids_n{n}_samples{samples}_seed{seed}.json")
    _write_json(out_path, json.loads(est.to_json()))
    return [out_path], resolved


def cmd_embed(cfg, family, out, workers):
    if family.base is None:
        raise ConfigError("measure", "embed needs a measure (atoms and probs)")
    path = os.path.join(out, "decomposition.csv")
    write_decomposition_csv(family, path)
    sys_path = os.path.join(out, "markov_system.json")
    system = family.system
    _write_json(sys_path, {"v": 1, "kappa": system.kappa, "block_len": system.block_len,
                           "nu": system.nu, "stationarity_residual": system.stationarity_residual(),
                           "warnings": [d.warning for d in family.decompositions if d.warning]})
    return [path, sys_path], {}


HANDLERS = {
    "lyapunov": cmd_lyapunov, "ids": cmd_ids, "thouless": cmd_thouless,
    "matchings": cmd_matchings, "tangency": cmd_tangency, "holder": cmd_holder,
    "embed": cmd_embed,
}

NUMERIC_ERRORS = (NotConverged, NoneFound, InsufficientSignal, ZeroExponent,
                  RootCountMismatch, NotHyperbolic, DegenerateScales, FloatingPointError)


def run(command, config_path, output=None, workers=1):
    """Execute one command; returns the exit code."""
    try:
        cfg = load_config(config_path)
        base_dir = os.path.dirname(os.path.abspath(config_path))
        out = os.path.abspath(output or os.path.join(base_dir, cfg.get("output", "out")))
        os.makedirs(out, exist_ok=True)
        needs_family = command != "holder" or "curve" not in cfg.get("holder", {})
        family = resolve_family(cfg, base_dir) if needs_family else None
        if command == "holder":
            files, resolved = cmd_holder(cfg, family, out, workers, base_dir)
        else:
            files, resolved = HANDLERS[command](cfg, family, out, workers)
        system = {k: cfg[k] for k in ("measure", "potentials", "halperin") if k in cfg}
        _write_json(os.path.join(out, f"provenance_{command}.json"), {
            "command": command, "version": __version__, "seed": cfg["seed"],
            "system": system, command: resolved,
            "outputs": [os.path.basename(f) for f in files]})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateGap, InvalidMeasure) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapExceeded as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="sl2lab", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="YAML experiment config")
    parser.add_argument("--output", help="output directory (overrides the config)")
    parser.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    return run(args.command, args.config, args.output, args.workers)


if __name__ == "__main__":
    sys.exit(main())
