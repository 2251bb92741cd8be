"""Shared fixtures for the unit and acceptance tests."""
import numpy as np

from levyrank.conditions import check_infinite_regulated, check_regulated, check_unregulated
from levyrank.finite_system import SystemParams
from levyrank.levy import JumpLaw

ACCEPTANCE_LINES = []


def record(number, ok, detail):
    """Print and keep one pass/fail line per acceptance criterion."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def activity(x):
    """A symmetric two-point law with ``rate * E|J| = x``."""
    return JumpLaw.symmetric_two_point(1.0, x) if x > 0 else JumpLaw.none()


def _unreg(deltas, x):
    return check_unregulated(SystemParams(deltas, np.ones(len(deltas))), activity(x))


def _reg(deltas, x):
    return check_regulated(SystemParams(deltas, np.ones(len(deltas)), barrier=0.0), activity(x))


# (label, report thunk, satisfied, threshold or None, margin or None)
CONDITION_ROWS = [
    ("unregulated d=(1,.5,0) x=0.1", lambda: _unreg([1, 0.5, 0], 0.1), True, 1 / 6,
     1 / 6 - 0.1),
    ("unregulated d=(1,1,0) x=0.3", lambda: _unreg([1, 1, 0], 0.3), False, 0.0, -0.3),
    ("unregulated d=(2,1,0) x=0", lambda: _unreg([2, 1, 0], 0.0), True, 1 / 3, 1 / 3),
    ("regulated d=(-.5,-1) x=0.2", lambda: _reg([-0.5, -1], 0.2), True, 0.25, 0.05),
    ("regulated d=(0,-1) x=0", lambda: _reg([0, -1], 0.0), False, 0.0, 0.0),
    ("regulated N=1 d=-1 x=0.5", lambda: _reg([-1], 0.5), True, 1.0, 0.5),
    ("infinite d1=-1 x=0.5", lambda: check_infinite_regulated(activity(0.5), -1), True, 1.0,
     0.5),
    ("infinite d1=-1 x=1", lambda: check_infinite_regulated(activity(1.0), -1), False, 1.0,
     0.0),
    ("infinite d1=-.3 x=0.5", lambda: check_infinite_regulated(activity(0.5), -0.3), False,
     0.3, -0.2),
]


def condition_row_ok(row):
    _, fn, sat, thr, margin = row
    rep = fn()
    return (rep.satisfied == sat and abs(rep.threshold - thr) <= 1e-12
            and abs(rep.margin - margin) <= 1e-12)


_LAW = {"kind": "two_point", "params": {"plus": 0.1, "minus": -0.1, "p_plus": 0.5},
        "rate": 0.5}
_SYS3 = {"deltas": [0.5, 0, -0.5], "sigmas": [1, 1, 1]}
_REG = {"deltas": [-1, -1], "sigmas": [1, 1], "barrier": 0}

# one small config per subcommand
CLI_CONFIGS = {
    "simulate": {"system": _SYS3, "law": _LAW,
                 "sim": {"dt": 0.01, "horizon": 2, "master_seed": 1},
                 "options": {"replicas": 2}},
    "check": {"system": _SYS3, "law": _LAW, "sim": {"master_seed": 1}},
    "invariant": {"system": {"deltas": [0.5, -0.5], "sigmas": [1, 1]}, "law": _LAW,
                  "sim": {"dt": 0.02, "horizon": 2, "master_seed": 1},
                  "options": {"init": [1], "epsilon": 0.5, "n_lo": 2, "n_hi": 4,
                              "replicas": 100, "n_boot": 10}},
    "tv": {"system": {"deltas": [0.5, -0.5], "sigmas": [1, 1]}, "law": _LAW,
           "sim": {"dt": 0.02, "horizon": 2, "master_seed": 1},
           "options": {"init_a": [0], "init_b": [3], "times": [1, 2], "replicas": 100,
                       "n_boot": 10}},
    "couple-verify": {"system": _REG, "law": _LAW,
                      "sim": {"dt": 0.02, "horizon": 2, "master_seed": 1},
                      "options": {"paths": 2, "K": 3}},
    "infinite": {"system": _REG, "law": _LAW,
                 "sim": {"dt": 0.02, "horizon": 2, "master_seed": 1,
                         "output_grid": [1, 2]},
                 "options": {"replicas": 5, "coords": [1], "K": 5}},
}


def run_cli(experiment, config, out_dir, *extra):
    """Run the CLI in-process; returns ``(status, {file name: bytes})``."""
    import json
    import os

    from levyrank.cli import main

    status = main([experiment, "--config", json.dumps(config), "--out", str(out_dir),
                   *extra])
    files = {}
    if os.path.isdir(out_dir):
        for name in sorted(os.listdir(out_dir)):
            with open(os.path.join(out_dir, name), "rb") as fh:
                files[name] = fh.read()
    return status, files
