"""Command-line driver: one experiment per invocation.

The experiment record is a single JSON document; command-line flags override
its fields. Everything downstream is validated before any sampling starts,
and the fully resolved record (including derived schedule values) heads every
result file. Wall-clock data only goes to the ``run.json`` sidecar, so two
runs of the same record produce byte-identical result files.
"""
import argparse
import csv
import io as _io
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from . import interp as _interp
from . import io as bundle_io
from .errors import ConfigInvalid, GplabError, InsufficientHits
from .field import default_spacing, lattice_ratio, make_bundle
from .interp import InterpolationSetup, dyadic_floor
from .kernel import BARGMANN_FOCK, bf_schedule, default_eta, parse_kernel, schedule
from .perc import CONTINUUM, TRUNCATED, CrossingEvent, parse_event, threshold, occurs, write_pbm
from .stats import (MIN_HITS, MIN_REPLICAS, ModelSpec, bisect_lc, cameron_martin_check, compare,
                    compare_scales, dumps, estimate, fit_decay, local_gap_tail, to_jsonable)

COMMANDS = ("sample", "estimate", "bisect-lc", "fit-decay", "compare", "interpolate", "local-compare",
            "cm-check")

DEFAULTS = {
    "kernel": {"family": BARGMANN_FOCK, "d": 2},
    "replicas": 1000,
    "seed": None,
    "eps": None,
    "h": None,
    "N": None,
    "delta": None,
    "s": None,
    "eta": None,
    "beta_eff": None,
    "bf_schedule": False,
    "c": 1.0,
    "gamma": None,
    "level": 0.0,
    "levels": None,
    "events": None,
    "model": TRUNCATED,
    "f_radius": None,
    "window": 4.0,
    "dump": [],
    "scales": [16, 32, 64],
    "p_star": 0.5,
    "aspect": 1.0,
    "bracket": [-1.0, 1.0],
    "tol": 1e-4,
    "radii": [8, 12, 16, 24, 32],
    "r": 1.0,
    "kind": "arm",
    "variant": "continuum",
    "n": 0,
    "steps": 4,
    "boxes": 1,
    "direction": "up",
    "trace_replicas": 1,
    "Ns": [4, 6, 8],
    "gap": 0.1,
    "which": "f-f_N",
    "K": [[1.0]],
    "w": [1.0],
    "cm_event": "min_ge:0",
}
# "schedule" is derived; it is accepted (and recomputed) so an echoed header can be re-run
KNOWN = set(DEFAULTS) | {"command", "out", "threads", "schedule"}


# -- configuration ---------------------------------------------------------------

def _require(cond, field, message):
    if not cond:
        raise ConfigInvalid(field, message)


def _num(cfg, key, positive=False, allow_none=True):
    v = cfg.get(key)
    if v is None:
        _require(allow_none, key, "is required")
        return None
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ConfigInvalid(key, f"expected a number, got {v!r}")
    _require(not math.isnan(v), key, "must not be NaN")
    if positive:
        _require(v > 0, key, "must be positive")
    return v


def load_config(path=None, overrides=None, env=None):
    """Merge defaults, the JSON file at ``path`` and ``overrides``; unknown keys are rejected."""
    env = os.environ if env is None else env
    cfg = {}
    if path is not None:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigInvalid("config", f"no such file {path}")
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("config", f"not valid JSON: {exc}")
        _require(isinstance(cfg, dict), "config", "must be a JSON object")
    cfg = dict(cfg)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = v
    unknown = sorted(set(cfg) - KNOWN)
    _require(not unknown, unknown[0] if unknown else "", "unknown configuration key")
    if cfg.get("seed") is None and env.get("GPLAB_SEED"):
        cfg["seed"] = env["GPLAB_SEED"]
        cfg["_seed_source"] = "GPLAB_SEED"
    return cfg


def resolve_schedule(cfg, kernel):
    """Sprinkle, mesh and noise level for range ``N``; explicit ``s``/``eps``/``delta`` win.

    Returns a dict that notes, per quantity, whether it was given, scheduled or defaulted.
    """
    N = _num(cfg, "N", positive=True)
    out = {"N": N, "kind": None, "sources": {}}
    sched = None
    if N is not None:
        if cfg.get("bf_schedule"):
            _require(kernel.family == BARGMANN_FOCK, "bf_schedule", "only applies to the Bargmann-Fock family")
            c = _num(cfg, "c", positive=True, allow_none=False)
            gamma = _num(cfg, "gamma")
            if gamma is None:
                gamma = kernel.d + 1.0
                out["sources"]["gamma"] = "defaulted"
            sched = bf_schedule(N, gamma, c, kernel.d)
            out.update(kind="bargmann_fock", c=c, gamma=gamma)
        else:
            beta = _num(cfg, "beta_eff")
            beta = kernel.beta if beta is None else beta
            if not math.isinf(beta):
                eta = _num(cfg, "eta")
                if eta is None:
                    eta = default_eta(beta, kernel.d)
                    out["sources"]["eta"] = "defaulted"
                sched = schedule(N, eta, beta, kernel.d)
                out.update(kind="polynomial", eta=eta, beta=beta, gamma=sched.gamma)
    for key in ("s", "eps", "delta"):
        v = _num(cfg, key)
        if v is not None:
            out[key] = v
            out["sources"][key] = "given"
        elif sched is not None:
            out[key] = getattr(sched, key)
            out["sources"][key] = "scheduled"
        else:
            out[key] = None
    if sched is not None:
        out["log_delta"] = sched.log_delta
        out["scheduled"] = sched.to_dict()
    if out["eps"] is not None:
        _require(out["eps"] > 0, "eps", "must be positive")
        if out["sources"].get("eps") == "scheduled":
            # a finer mesh than scheduled is always admissible; snap so eps is in hZ^d
            out["eps_used"] = dyadic_floor(out["eps"])
        else:
            out["eps_used"] = out["eps"]
    if out["delta"] is not None:
        _require(0 <= out["delta"] <= 1, "delta", "must lie in [0, 1]")
    if out["s"] is not None:
        _require(out["s"] >= 0, "s", "must be non-negative")
    return out


def _events(cfg, d):
    raw = cfg.get("events")
    if raw is None:
        return []
    if isinstance(raw, str):
        raw = [raw]
    out = []
    for i, text in enumerate(raw):
        try:
            ev = parse_event(text)
        except ValueError as exc:
            raise ConfigInvalid(f"events[{i}]", str(exc))
        if isinstance(ev, CrossingEvent) and len(ev.sides) != d:
            ev = CrossingEvent((ev.sides[0],) + (ev.sides[1],) * (d - 1), ev.axis)
        out.append(ev)
    return out


def resolve(cfg):
    """Validate ``cfg`` and return the canonical resolved record."""
    cfg = {**DEFAULTS, **{k: v for k, v in cfg.items() if v is not None}}
    command = cfg.get("command")
    _require(command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
    try:
        kernel = parse_kernel(cfg.get("kernel", DEFAULTS["kernel"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigInvalid("kernel", str(exc))
    r = {k: cfg.get(k, v) for k, v in DEFAULTS.items()}
    r["command"] = command
    r["kernel"] = kernel.to_config()
    seed = cfg.get("seed")
    try:
        seed = 0 if seed is None else int(seed)
    except (TypeError, ValueError):
        raise ConfigInvalid("seed", f"expected an unsigned integer, got {seed!r}")
    _require(0 <= seed < 2 ** 64, "seed", "must fit in 64 unsigned bits")
    r["seed"] = seed
    try:
        r["replicas"] = int(cfg.get("replicas", DEFAULTS["replicas"]))
    except (TypeError, ValueError):
        raise ConfigInvalid("replicas", "expected an integer")
    _require(r["replicas"] >= 1, "replicas", "must be >= 1")
    r["schedule"] = resolve_schedule(cfg, kernel)
    r["events"] = [e.describe() for e in _events(cfg, kernel.d)]
    r["level"] = _num(cfg, "level", allow_none=False)
    if cfg.get("levels") is not None:
        _require(isinstance(cfg["levels"], list) and cfg["levels"], "levels", "must be a non-empty list")
        r["levels"] = [float(v) for v in cfg["levels"]]
    _require(r["model"] in (TRUNCATED, CONTINUUM, "continuum"), "model", "must be 'truncated' or 'continuum'")
    r["model"] = CONTINUUM if r["model"] in (CONTINUUM, "continuum") else TRUNCATED
    h = _num(cfg, "h", positive=True)
    eps = r["schedule"].get("eps_used")
    if eps is not None and h is not None:
        try:
            lattice_ratio(eps, h)
        except ValueError:
            raise ConfigInvalid("h", f"mesh {eps} is not a multiple of spacing {h}")
    r["h"] = h
    _validate_command(r, kernel)
    return r


def _validate_command(r, kernel):
    c = r["command"]
    sch = r["schedule"]
    if c in ("estimate", "compare"):
        _require(r["events"], "events", f"{c} needs at least one event")
    truncated = c == "compare" or (c in ("estimate", "fit-decay", "bisect-lc") and r["model"] == TRUNCATED)
    if truncated:
        _require(sch["N"] is not None, "N", f"{c} with a truncated model needs N")
        _require(sch["eps"] is not None, "eps", "mesh is neither given nor scheduled")
        _require(sch["delta"] is not None, "delta", "noise level is neither given nor scheduled")
    if c == "compare":
        _require(sch["s"] is not None, "s", "sprinkle is neither given nor scheduled")
        _require(r["variant"] in ("continuum", "N-vs-2N", "both"), "variant",
                 "must be 'continuum', 'N-vs-2N' or 'both'")
    if c in ("estimate", "compare", "bisect-lc", "fit-decay"):
        _require(r["replicas"] >= MIN_REPLICAS, "replicas", f"must be >= {MIN_REPLICAS}")
    if c == "bisect-lc":
        _require(len(r["scales"]) >= 1 and all(float(v) > 0 for v in r["scales"]), "scales",
                 "must be positive")
        _require(0 < float(r["p_star"]) <= 1, "p_star", "must lie in (0, 1]")
        _require(len(r["bracket"]) == 2 and r["bracket"][0] < r["bracket"][1], "bracket",
                 "must be [lo, hi] with lo < hi")
    if c == "fit-decay":
        radii = [float(v) for v in r["radii"]]
        _require(len(radii) >= 4, "radii", "need at least 4 radii")
        _require(all(b > a for a, b in zip(radii, radii[1:])), "radii", "must be strictly increasing")
        _require(r["kind"] in ("arm", "disconnection"), "kind", "must be 'arm' or 'disconnection'")
    if c == "interpolate":
        _require(sch["N"] is not None, "N", "interpolate needs N")
        _require(kernel.d >= 2, "kernel.d", "interpolation needs d >= 2")
        _require(int(r["n"]) >= 0, "n", "must be >= 0")
        _require(r["direction"] in ("up", "down"), "direction", "must be 'up' or 'down'")
        _require(int(r["boxes"]) >= 1, "boxes", "must be >= 1")
        N, boxes = sch["N"], int(r["boxes"])
        for i, text in enumerate(r["events"]):
            _require(parse_event(text).extent() + 2 * N < (2 * boxes + 1) * N, f"events[{i}]",
                     f"window of {boxes} box layers must extend 2N beyond the event; raise boxes")
    if c == "local-compare":
        _require(all(float(v) >= 1 for v in r["Ns"]), "Ns", "ranges must be >= 1")
        _require(r["which"] in ("f-f_N", "f_N-f_N^eps"), "which", "must be 'f-f_N' or 'f_N-f_N^eps'")
    if c == "cm-check":
        K = np.atleast_2d(np.asarray(r["K"], dtype=float))
        _require(K.ndim == 2 and K.shape[0] == K.shape[1], "K", "must be a square matrix")
        _require(np.asarray(r["w"], dtype=float).shape == (K.shape[0],), "w", "length must match K")
        _cm_event(r["cm_event"])
    if c == "sample":
        _require(sch["eps"] is not None, "eps", "sample needs a mesh")
        _require(float(r["window"]) > 0, "window", "must be positive")
        bad = set(r["dump"]) - {"bundle", "csv", "pbm"}
        _require(not bad, "dump", "entries must be among bundle, csv, pbm")


def _cm_event(text):
    kind, _, val = str(text).partition(":")
    try:
        b = float(val)
    except ValueError:
        raise ConfigInvalid("cm_event", f"expected 'min_ge:b', 'max_ge:b' or 'sum_ge:b', got {text!r}")
    ops = {"min_ge": lambda x: x.min(axis=1) >= b, "max_ge": lambda x: x.max(axis=1) >= b,
           "sum_ge": lambda x: x.sum(axis=1) >= b}
    _require(kind in ops, "cm_event", f"unknown event kind {kind!r}")
    return ops[kind]


# -- execution ---------------------------------------------------------------------

def _model(r, kernel):
    sch = r["schedule"]
    if r["model"] == CONTINUUM:
        eps = sch.get("eps_used") or 0.25
        return ModelSpec.continuum(kernel, eps, h=r["h"], f_radius=r["f_radius"])
    return ModelSpec(kernel, sch["eps_used"], sch["N"], sch["delta"], r["h"], TRUNCATED, r["f_radius"])


def _report_rows(reports):
    rows, low = [], False
    for rep in reports:
        d = rep.to_dict()
        d["insufficient_hits"] = rep.hits < MIN_HITS
        low |= d["insufficient_hits"]
        rows.append(d)
    return rows, low


def _run_sample(r, kernel, out, workers):
    sch = r["schedule"]
    eps = sch["eps_used"]
    half = float(r["window"])
    b = make_bundle(kernel, None, sch["N"], eps, sch["delta"] or 0.0, ([-half] * kernel.d, [half] * kernel.d),
                    h=r["h"], seed=r["seed"], replica=0, with_f=True, f_radius=r["f_radius"])
    files = {}
    if "bundle" in r["dump"]:
        bundle_io.save_bundle(os.path.join(out, "bundle.gpb"), b, meta={"config": r})
        files["bundle"] = "bundle.gpb"
    if "csv" in r["dump"]:
        bundle_io.export_csv(os.path.join(out, "field.csv"), b)
        files["csv"] = "field.csv"
    grid = threshold(b, r["level"])
    if "pbm" in r["dump"]:
        write_pbm(os.path.join(out, "occupancy.pbm"), grid)
        files["pbm"] = "occupancy.pbm"
    row = {"f_mean": float(b.f.mean()), "f_var": float(b.f.var()), "f_N_mean": float(b.f_N.mean()),
           "f_N_var": float(b.f_N.var()), "open_fraction": float(grid.open.mean()),
           "shape": list(b.lattice.shape), "eps_shape": list(b.eps_lattice.shape), "files": files}
    for text in r["events"]:
        row[f"occurs[{text}]"] = occurs(grid, event=parse_event(text))
    return [row], False, None


def _run_estimate(r, kernel, out, workers):
    model = _model(r, kernel)
    levels = r["levels"] or [r["level"]]
    reps = [estimate(parse_event(e), model, lvl, r["replicas"], r["seed"], workers=workers)
            for e in r["events"] for lvl in levels]
    rows, low = _report_rows(reps)
    return rows, low, None


def _run_bisect(r, kernel, out, workers):
    model = _model(r, kernel)
    rep = bisect_lc(model, [float(v) for v in r["scales"]], float(r["p_star"]), r["replicas"], r["seed"],
                    float(r["aspect"]), tuple(r["bracket"]), float(r["tol"]), workers=workers)
    rows = [dict(row, extrapolated=rep.extrapolated) for row in rep.to_dict()["scales"]]
    return rows, False, None


def _run_fit(r, kernel, out, workers):
    model = _model(r, kernel)
    fit = fit_decay(model, [float(v) for v in r["radii"]], r["level"], r["replicas"], r["seed"],
                    float(r["r"]), r["kind"], workers=workers)
    d = fit.to_dict()
    points = d.pop("points")
    return [d], False, ("points.csv", points)


def _run_compare(r, kernel, out, workers):
    sch = r["schedule"]
    model = _model(dict(r, model=TRUNCATED), kernel)
    events = [parse_event(e) for e in r["events"]]
    rows = []
    if r["variant"] in ("continuum", "both"):
        rows += compare(r["level"], sch["s"], model, events, r["replicas"], r["seed"], workers=workers)
    if r["variant"] in ("N-vs-2N", "both"):
        two = resolve_schedule(dict(r, N=2 * sch["N"], **_explicit(r)), kernel)
        model2 = ModelSpec(kernel, two["eps_used"], two["N"], two["delta"], r["h"], TRUNCATED)
        rows += compare_scales(r["level"], model, model2, sch["s"], events, r["replicas"], r["seed"],
                               workers=workers)
    out_rows = [row.to_dict() for row in rows]
    for d, row in zip(out_rows, rows):
        d["insufficient_hits"] = any(getattr(row, k).hits < MIN_HITS for k in ("lower", "middle", "upper"))
    low = any(d["insufficient_hits"] for d in out_rows)
    return out_rows, low, None


def _explicit(r):
    """Schedule inputs of the resolved record, for re-resolving at another ``N``."""
    sch = r["schedule"]
    keys = {}
    for k in ("s", "eps", "delta"):
        keys[k] = sch[k] if sch["sources"].get(k) == "given" else None
    keys["eta"] = sch.get("eta")
    keys["gamma"] = sch.get("gamma") if sch.get("kind") == "bargmann_fock" else None
    return keys


def _setup(r, kernel):
    sch = r["schedule"]
    N = sch["N"]
    two = resolve_schedule(dict(r, N=2 * N, **_explicit(r)), kernel)
    _require(sch["s"] is not None, "s", "sprinkle is neither given nor scheduled")
    _require(sch["eps"] is not None, "eps", "mesh is neither given nor scheduled")
    delta_N = sch["delta"] or 0.0
    delta_2N = two["delta"] or 0.0
    return InterpolationSetup(kernel, N, sch["s"], sch["eps_used"], two["eps_used"], delta_N, delta_2N,
                              r["level"], int(r["boxes"]), r["direction"], r["h"])


def _run_interpolate(r, kernel, out, workers):
    setup = _setup(r, kernel)
    n = int(r["n"])
    inc, suf = _interp.inclusion_rate(n, r["replicas"], setup, r["seed"])
    rows = [inc.to_dict(), suf.to_dict()]
    events = [parse_event(e) for e in r["events"]]
    if events:
        prof = _interp.pivotality_profile(n, events[0], r["replicas"], setup, r["seed"])
        rows.append(prof.to_dict())
    trace_rows = []
    ev = events[0] if events else CrossingEvent.square(setup.N, setup.d)
    for rep in range(int(r["trace_replicas"])):
        pair = _interp.sample_pair(setup, r["seed"], rep)
        for row in _interp.trace(pair, ev, int(r["steps"])):
            trace_rows.append(dict(row, replica=rep))
    with open(os.path.join(out, "trace.jsonl"), "w") as fh:
        fh.write(dumps({"header": r}) + "\n")
        for row in trace_rows:
            fh.write(dumps(row) + "\n")
    return rows, False, None


def _run_local(r, kernel, out, workers):
    sch = r["schedule"]
    eps = sch.get("eps_used") or 0.25
    which = 0 if r["which"] == "f-f_N" else 1
    reps = [local_gap_tail(kernel, float(N), float(r["gap"]), r["replicas"], r["seed"], eps, r["h"], which)
            for N in r["Ns"]]
    rows = [dict(rep.to_dict(), N=float(N)) for rep, N in zip(reps, r["Ns"])]
    return rows, False, None


def _run_cm(r, kernel, out, workers):
    res = cameron_martin_check(r["K"], r["w"], _cm_event(r["cm_event"]), r["replicas"], r["seed"])
    return [dict(res.to_dict(), discrepancy_sigma=res.discrepancy_sigma)], False, None


_RUNNERS = {"sample": _run_sample, "estimate": _run_estimate, "bisect-lc": _run_bisect,
            "fit-decay": _run_fit, "compare": _run_compare, "interpolate": _run_interpolate,
            "local-compare": _run_local, "cm-check": _run_cm}


def _flat(row):
    out = {}
    for k, v in row.items():
        if isinstance(v, (dict, list)):
            out[k] = dumps(v)
        elif isinstance(v, (bool, np.bool_)):
            out[k] = "true" if v else "false"
        else:
            out[k] = to_jsonable(v)
    return out


def _write_csv(path, header, rows):
    keys = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    if "params" in keys:
        keys.insert(0, keys.pop(keys.index("params")))
    buf = _io.StringIO()
    buf.write("# config: " + dumps(header) + "\n")
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in _flat(row).items()})
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _write_jsonl(path, header, rows):
    with open(path, "w") as fh:
        fh.write(dumps({"header": header}) + "\n")
        for row in rows:
            fh.write(dumps(row) + "\n")


def run(cfg, out=None, threads=None, log=None):
    """Execute one experiment record. Returns the process exit status."""
    log = sys.stderr if log is None else log
    out = cfg.get("out") if out is None else out
    out = out or "gplab-out"
    t0 = time.time()
    side = {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "version": __version__,
            "python": platform.python_version(), "numpy": np.__version__}
    try:
        os.makedirs(out, exist_ok=True)
        r = resolve(cfg)
        side["seed_source"] = cfg.get("_seed_source", "config" if cfg.get("seed") is not None else "defaulted")
        workers = int(threads or cfg.get("threads") or os.cpu_count() or 1)
        side["threads"] = workers
        print("resolved schedule: " + dumps(r["schedule"]), file=log)
        kernel = parse_kernel(r["kernel"])
        rows, low, extra = _RUNNERS[r["command"]](r, kernel, out, workers)
        _write_jsonl(os.path.join(out, "results.jsonl"), r, rows)
        _write_csv(os.path.join(out, "results.csv"), r, rows)
        if extra is not None:
            _write_csv(os.path.join(out, extra[0]), r, extra[1])
        status = 0
        if low:
            status = InsufficientHits.exit_code
            _error_record(out, InsufficientHits(f"an estimate has fewer than {MIN_HITS} hits"), log)
    except GplabError as exc:
        status = exc.exit_code
        _error_record(out, exc, log)
    except (ValueError, KeyError, TypeError) as exc:
        status = 2
        _error_record(out, ConfigInvalid("config", str(exc)), log)
    except (MemoryError, OSError, ArithmeticError, RuntimeError) as exc:
        status = 3
        _error_record(out, exc, log)
    side.update(finished=time.strftime("%Y-%m-%dT%H:%M:%S%z"), seconds=round(time.time() - t0, 3),
                exit_status=status)
    try:
        with open(os.path.join(out, "run.json"), "w") as fh:
            json.dump(side, fh, sort_keys=True, indent=1)
            fh.write("\n")
    except OSError:
        pass
    return status


def _error_record(out, exc, log):
    rec = {"error": type(exc).__name__, "message": str(exc),
           "exit_code": getattr(exc, "exit_code", 3)}
    if isinstance(exc, ConfigInvalid):
        rec["field"] = exc.field
    text = dumps(rec)
    print(text, file=log)
    if not out:
        return
    try:
        with open(os.path.join(out, "error.json"), "w") as fh:
            fh.write(text + "\n")
    except OSError:
        pass


def build_parser():
    p = argparse.ArgumentParser(prog="gplab", description="Excursion-set percolation experiments.")
    p.add_argument("command", nargs="?", choices=COMMANDS, help="overrides the record's command")
    p.add_argument("--config", help="JSON experiment record")
    p.add_argument("--seed", help="unsigned 64-bit seed (fallback: GPLAB_SEED)")
    p.add_argument("--replicas", type=int)
    p.add_argument("--threads", type=int, help="worker processes (default: machine parallelism)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--bf-schedule", action="store_true", default=None,
                   help="use the Bargmann-Fock schedule with inputs c and gamma")
    p.add_argument("--level", type=float)
    p.add_argument("--N", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--event", action="append", help="full:r,R | slab:r,R,M | cross:L[,W]; repeatable")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"command": args.command, "seed": args.seed, "replicas": args.replicas,
                 "level": args.level, "N": args.N, "eps": args.epsilon, "delta": args.delta,
                 "events": args.event, "bf_schedule": args.bf_schedule}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigInvalid as exc:
        if args.out:
            os.makedirs(args.out, exist_ok=True)
        _error_record(args.out or "", exc, sys.stderr)
        return exc.exit_code
    return run(cfg, out=args.out, threads=args.threads)
