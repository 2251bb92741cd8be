"""Command line entry point and JSON run configuration.

A run config is one JSON document::

    {
      "experiment": "simulate",
      "system": {"deltas": [0.5, 0, -0.5], "sigmas": [1, 1, 1], "barrier": null},
      "law": {"kind": "two_point", "params": {"plus": 0.1, "minus": -0.1,
                                              "p_plus": 0.5}, "rate": 0.5},
      "sim": {"dt": 0.001, "horizon": 10, "master_seed": 1},
      "options": {"replicas": 4},
      "output": {"dir": "out"}
    }

Unknown keys are rejected and every error names the offending field path.
Output files are written with fixed float formatting, so a rerun with the
same config produces byte-identical files.
"""
import argparse
from dataclasses import dataclass, field
import hashlib
import json
import math
import os
import sys
import warnings

import numpy as np

from .conditions import (check_assumptions, check_infinite_initial,
                         check_infinite_regulated, check_regulated, check_unregulated)
from .coupling import simulate_rank_coupled_pair, simulate_H, verify_gap_domination
from .errors import ConfigError, LevyRankError
from .ergodics import skeleton_stationarity, two_start_convergence
from .finite_system import SimConfig, SystemParams, simulate, simulate_batch
from .infinite_system import (InfiniteInitial, choose_truncation,
                              simulate_infinite_regulated, simulate_infinite_unregulated,
                              tightness_diagnostic)
from .levy import JumpLaw, validate_law
from ._kernel import CAUSE_JUMP

EXPERIMENTS = ("simulate", "check", "invariant", "tv", "couple-verify", "infinite")

SYSTEM_KEYS = {"deltas", "sigmas", "barrier", "tie_order", "deterministic_test"}
LAW_KEYS = {"kind", "params", "rate"}
SIM_KEYS = {"dt", "horizon", "output_grid", "master_seed", "mode", "reflection"}
OUTPUT_KEYS = {"dir"}
OPTION_KEYS = {
    "simulate": {"replicas", "initial"},
    "check": {"infinite", "M"},
    "invariant": {"init", "epsilon", "n_lo", "n_hi", "replicas", "bins", "n_boot"},
    "tv": {"init_a", "init_b", "times", "replicas", "bins", "n_boot"},
    "couple-verify": {"paths", "initial", "init_low", "init_high", "K", "gamma1", "gamma2"},
    "infinite": {"gamma1", "gamma2", "prefix", "K", "epsilon", "y", "M", "coords",
                 "times", "replicas"},
}
TOP_KEYS = {"experiment", "system", "law", "sim", "options", "output"}
FLOAT_FMT = ".17g"


@dataclass
class RunConfig:
    experiment: str
    system: dict
    law: dict
    sim: dict
    options: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def to_dict(self):
        return {"experiment": self.experiment, "system": self.system, "law": self.law,
                "sim": self.sim, "options": self.options, "output": self.output}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    def params(self):
        return _build(SystemParams, self.system, "system")

    def jump_law(self):
        return JumpLaw.from_dict(self.law) if self.law else JumpLaw.none()

    def sim_config(self, **override):
        d = dict(self.sim, **override)
        if "mode" not in d:
            d["mode"] = "unregulated" if self.system.get("barrier") is None else "regulated"
        return _build(SimConfig, d, "sim")


def _build(cls, d, path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), field=path) from None


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", field=path or None)
    for k in d:
        if k not in allowed:
            where = f"{path}.{k}" if path else k
            raise ConfigError("unknown key", field=where)


def _number(d, key, path, *, integer=False, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError("required field is missing", field=f"{path}.{key}")
        return
    v = d[key]
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok or (not integer and not math.isfinite(v)):
        kind = "an integer" if integer else "a finite number"
        raise ConfigError(f"must be {kind}", field=f"{path}.{key}")


def parse_config(source):
    """Parse and validate a run config from a path or inline JSON text."""
    text = source
    if isinstance(source, (str, os.PathLike)) and os.path.exists(str(source)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    if isinstance(text, dict):
        data = text
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None
    _check_keys(data, TOP_KEYS, "")
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"must be one of {list(EXPERIMENTS)}", field="experiment")
    system = data.get("system")
    if system is None:
        raise ConfigError("required section is missing", field="system")
    _check_keys(system, SYSTEM_KEYS, "system")
    for k in ("deltas", "sigmas"):
        if not isinstance(system.get(k), list) or not system[k]:
            raise ConfigError("must be a non-empty list of numbers", field=f"system.{k}")
    law = data.get("law", {"kind": "two_point",
                           "params": {"plus": 0.0, "minus": 0.0, "p_plus": 0.5},
                           "rate": 0.0})
    _check_keys(law, LAW_KEYS, "law")
    try:
        report = validate_law(JumpLaw.from_dict(law))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid law: {exc}", field="law") from None
    if not report.valid:
        raise ConfigError("; ".join(report.problems), field="law")
    sim = data.get("sim")
    if sim is None:
        raise ConfigError("required section is missing", field="sim")
    _check_keys(sim, SIM_KEYS, "sim")
    _number(sim, "master_seed", "sim", integer=True, required=True)
    _number(sim, "horizon", "sim", required=exp != "check")
    _number(sim, "dt", "sim")
    options = data.get("options", {})
    _check_keys(options, OPTION_KEYS[exp], "options")
    output = data.get("output", {})
    _check_keys(output, OUTPUT_KEYS, "output")
    cfg = RunConfig(exp, system, law, sim, options, output)
    cfg.params()
    if exp != "check":
        cfg.sim_config()
    return cfg


def _set_path(d, dotted, value):
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
    d[keys[-1]] = value


# ---- output helpers ------------------------------------------------------

def fmt(v):
    return format(float(v), FLOAT_FMT)


def write_csv(path, header, rows, config_hash):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(x if isinstance(x, str) else fmt(x) for x in row) + "\n")


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    return o


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n")


def _gap_names(n, regulated):
    return [f"z_{i}" for i in range(1, (n if regulated else n - 1) + 1)]


# ---- experiments -----------------------------------------------------------

def _simulate(cfg, out, workers):
    params, law, sc = cfg.params(), cfg.jump_law(), cfg.sim_config()
    reps = int(cfg.options.get("replicas", 1))
    x0 = np.array(cfg.options.get("initial", _default_initial(params, sc)), dtype=float)
    batch = simulate_batch(params, sc, x0, law, reps, workers=workers)
    n = params.N
    reg = sc.mode == "regulated"
    header = (["replica", "t"] + [f"x_{i}" for i in range(1, n + 1)]
              + [f"y_{i}" for i in range(1, n + 1)] + _gap_names(n, reg)
              + ([f"r_{i}" for i in range(1, n + 1)] if reg else []))
    Y, Zg = batch.ordered, batch.gaps
    rows = []
    for r in range(reps):
        for k, t in enumerate(batch.times):
            row = [str(r), t, *batch.positions[r, k], *Y[r, k], *Zg[r, k]]
            if reg:
                row += list(batch.regulation[r, k])
            rows.append(row)
    path = os.path.join(out, "trajectory.csv")
    write_csv(path, header, rows, cfg.config_hash())
    return {"files": [path], "replicas": reps, "grid_points": int(batch.times.size)}


def _default_initial(params, sc):
    b = params.barrier if sc.mode == "regulated" else 0.0
    return b + np.arange(params.N, dtype=float)


def _check(cfg, out, workers):
    params, law = cfg.params(), cfg.jump_law()
    infinite = bool(cfg.options.get("infinite", False))
    reports = {"assumptions": check_assumptions(params, law, infinite,
                                                cfg.options.get("M")).to_dict()}
    if params.barrier is not None:
        reports["regulated"] = check_regulated(params, law).to_dict()
        if infinite:
            reports["infinite_regulated"] = check_infinite_regulated(
                law, params.deltas[0]).to_dict()
    elif params.N >= 2:
        reports["unregulated"] = check_unregulated(params, law).to_dict()
    path = os.path.join(out, "check.json")
    write_json(path, reports)
    print(json.dumps(_clean(reports), sort_keys=True))
    return {"files": [path]}


def _tv(cfg, out, workers):
    params, law, sc = cfg.params(), cfg.jump_law(), cfg.sim_config()
    o = cfg.options
    times = o.get("times", [sc.horizon])
    rep = two_start_convergence(params, o["init_a"], o["init_b"], times,
                                int(o.get("replicas", 1000)), sc.master_seed, law,
                                dt=sc.dt, bins=o.get("bins", 20), n_boot=o.get("n_boot", 200),
                                mode=sc.mode)
    return _emit_report(cfg, out, rep, "tv")


def _invariant(cfg, out, workers):
    params, law, sc = cfg.params(), cfg.jump_law(), cfg.sim_config()
    o = cfg.options
    rep = skeleton_stationarity(params, o["init"], o.get("epsilon", 1.0), o.get("n_lo", 10),
                                o.get("n_hi", 20), int(o.get("replicas", 1000)),
                                sc.master_seed, law, dt=sc.dt, bins=o.get("bins", 20),
                                n_boot=o.get("n_boot", 200), mode=sc.mode)
    return _emit_report(cfg, out, rep, "invariant")


def _emit_report(cfg, out, rep, name):
    jpath = os.path.join(out, f"{name}.json")
    write_json(jpath, rep.to_dict())
    cpath = os.path.join(out, f"{name}.csv")
    if rep.tv.size == rep.times.size:
        header = ["t", "tv", "tv_se"]
        rows = [[t, v, e] for t, v, e in zip(rep.times, rep.tv, rep.tv_se)]
    else:
        header = ["t_lo", "t_hi", "tv", "tv_se"]
        rows = [[rep.times[0], rep.times[-1], rep.tv[0], rep.tv_se[0]]]
    write_csv(cpath, header, rows, cfg.config_hash())
    return {"files": [jpath, cpath], "tv_last": float(rep.tv[-1])}


def _couple_verify(cfg, out, workers):
    params, law, sc = cfg.params(), cfg.jump_law(), cfg.sim_config()
    o = cfg.options
    paths = int(o.get("paths", 10))
    result = {"paths": paths}
    if sc.mode == "unregulated":
        x0 = np.array(o.get("initial", _default_initial(params, sc)), float)
        worst = max(verify_gap_domination(simulate(params, sc, x0, law, replica=r,
                                                   record_noise=True))
                    for r in range(paths))
        result["gap_domination_max_violation"] = worst
    else:
        lo = np.array(o.get("init_low", np.full(params.N, params.barrier)), float)
        hi = np.array(o.get("init_high", _default_initial(params, sc)), float)
        viol, worst = 0, -np.inf
        for r in range(paths):
            pair = simulate_rank_coupled_pair(params, lo, hi, sc, law, replica=r)
            viol += pair.violations
            worst = max(worst, pair.max_violation)
        result["pair_order_violations"] = viol
        result["pair_order_max_excess"] = worst
        if np.ptp(params.deltas) == 0 and np.ptp(params.sigmas) == 0:
            ini = InfiniteInitial([], o.get("gamma1", 1.0), o.get("gamma2", 0.0))
            K = int(o.get("K", 10))
            hw = -np.inf
            for r in range(paths):
                run = simulate_infinite_regulated(ini, K, params, sc, law, replica=r)
                x0 = ini.positions(K)
                for i in range(K):
                    H = simulate_H(x0[i], params, sc, (run.stream_master, i), law)
                    hw = max(hw, float(np.max(run.positions[:, i] - H.values)))
            result["H_domination_max_violation"] = hw
    path = os.path.join(out, "couple_verify.json")
    write_json(path, result)
    print(json.dumps(_clean(result), sort_keys=True))
    return {"files": [path]}


def _infinite(cfg, out, workers):
    params, law, sc = cfg.params(), cfg.jump_law(), cfg.sim_config()
    o = cfg.options
    ini = InfiniteInitial(o.get("prefix", []), o.get("gamma1", 1.0), o.get("gamma2", 0.0))
    init_report = check_infinite_initial(ini)
    K = o.get("K")
    if K is None:
        K = choose_truncation(ini, law, float(params.sigmas[0]),
                              float(np.max(np.abs(params.deltas))), sc.horizon,
                              o.get("y", 0.0 if params.barrier is None else params.barrier),
                              o.get("epsilon", 1e-3), master_seed=sc.master_seed)
    K = int(K)
    files = []
    summary = {"K": K, "initial": init_report.to_dict()}
    if sc.mode == "regulated":
        times = o.get("times", list(sc.output_grid))
        rep = tightness_diagnostic(o.get("coords", [1]), times, int(o.get("replicas", 100)),
                                   ini, K, params, sc, law)
        header = ["t"] + [f"q95_z_{j}" for j in rep.coords]
        rows = [[t] + [rep.q95[j][k] for j in rep.coords] for k, t in enumerate(rep.times)]
        cpath = os.path.join(out, "quantiles.csv")
        write_csv(cpath, header, rows, cfg.config_hash())
        files.append(cpath)
        summary["tightness"] = rep.to_dict()
    else:
        run = simulate_infinite_unregulated(ini, K, params, sc, law, M=o.get("M"))
        acts = run.schedule.activations()
        cpath = os.path.join(out, "activations.csv")
        write_csv(cpath, ["particle", "time", "cause", "level", "position"],
                  [[str(p), t, ("jump" if c == CAUSE_JUMP else "diffusion"), lv, ps]
                   for p, t, c, lv, ps in acts],
                  cfg.config_hash())
        files.append(cpath)
        summary["activations"] = len(acts)
        summary["tolerance"] = run.tolerance
    jpath = os.path.join(out, "infinite.json")
    write_json(jpath, summary)
    files.append(jpath)
    return {"files": files, "K": K}


RUNNERS = {"simulate": _simulate, "check": _check, "tv": _tv, "invariant": _invariant,
           "couple-verify": _couple_verify, "infinite": _infinite}


def run(config, out_dir=None, workers=1):
    """Run one experiment; returns ``(exit_status, summary)``."""
    out = out_dir or config.output.get("dir", "out")
    os.makedirs(out, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        summary = RUNNERS[config.experiment](config, out, workers)
    print(f"{config.experiment}: ok, config {config.config_hash()}, "
          f"{len(summary.get('files', []))} file(s) in {out}")
    return 0, summary


def build_parser():
    ap = argparse.ArgumentParser(prog="levyrank",
                                 description="Rank-based Levy particle system experiments")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="JSON config path or inline JSON")
    ap.add_argument("--seed", type=int, help="override sim.master_seed")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for replicas")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--set", action="append", default=[], metavar="PATH=JSON",
                    help="override one config field, e.g. --set sim.dt=0.01")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        src = args.config
        if os.path.exists(src):
            with open(src, encoding="utf-8") as fh:
                src = fh.read()
        try:
            data = json.loads(src)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data["experiment"] = args.experiment
        if args.seed is not None:
            data.setdefault("sim", {})["master_seed"] = args.seed
        for item in args.set:
            key, _, value = item.partition("=")
            try:
                _set_path(data, key, json.loads(value))
            except json.JSONDecodeError:
                _set_path(data, key, value)
        cfg = parse_config(data)
        status, _ = run(cfg, args.out, args.workers)
        return status
    except (LevyRankError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
