"""Driving noise: Brownian increments and compound-Poisson jump paths.

Each particle (or rank, in rank-attached couplings) owns a :class:`NoiseStream`
keyed by ``(master_seed, stream_id)``. A stream carries three independent
generators:

* ``brownian``   -- one standard normal per base time step,
* ``reflection`` -- one uniform per base time step (bridge minimum at a barrier),
* ``bridge``     -- extra draws used when a step is split at a jump time,

plus a jump schedule on a fixed horizon. Regenerating a stream from the same
key reproduces every draw bit for bit.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import InvalidArgument, UnsupportedLaw
from .seeding import make_rng

KINDS = ("two_point", "uniform_symmetric", "laplace", "discrete_table")
MEAN_TOL = 1e-12
_BLOCK = 64


@dataclass(frozen=True)
class JumpLaw:
    """Jump-size law plus Poisson rate of a compound-Poisson process.

    ``params`` by kind:

    ============= ==========================================
    two_point      ``plus``, ``minus``, ``p_plus``
    uniform_sym.   ``a`` (support ``[-a, a]``)
    laplace        ``scale``
    discrete_table ``values``, ``probs``
    ============= ==========================================
    """

    kind: str
    params: dict = field(default_factory=dict)
    rate: float = 0.0

    @classmethod
    def two_point(cls, plus, minus, p_plus=0.5, rate=1.0):
        return cls("two_point", {"plus": float(plus), "minus": float(minus),
                                 "p_plus": float(p_plus)}, float(rate))

    @classmethod
    def symmetric_two_point(cls, size, rate):
        return cls.two_point(size, -size, 0.5, rate)

    @classmethod
    def uniform(cls, a, rate):
        return cls("uniform_symmetric", {"a": float(a)}, float(rate))

    @classmethod
    def laplace(cls, scale, rate):
        return cls("laplace", {"scale": float(scale)}, float(rate))

    @classmethod
    def table(cls, values, probs, rate):
        return cls("discrete_table", {"values": [float(v) for v in values],
                                      "probs": [float(p) for p in probs]}, float(rate))

    @classmethod
    def none(cls):
        return cls.two_point(0.0, 0.0, 0.5, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "rate": self.rate}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d.get("params", {})), float(d.get("rate", 0.0)))

    def mean(self):
        p = self.params
        if self.kind == "two_point":
            return p["p_plus"] * p["plus"] + (1.0 - p["p_plus"]) * p["minus"]
        if self.kind in ("uniform_symmetric", "laplace"):
            return 0.0
        if self.kind == "discrete_table":
            return float(np.dot(p["probs"], p["values"]))
        raise UnsupportedLaw(f"unsupported jump law kind {self.kind!r}")

    def abs_mean(self):
        """E|J| in closed form."""
        p = self.params
        if self.kind == "two_point":
            return p["p_plus"] * abs(p["plus"]) + (1.0 - p["p_plus"]) * abs(p["minus"])
        if self.kind == "uniform_symmetric":
            return abs(p["a"]) / 2.0
        if self.kind == "laplace":
            return abs(p["scale"])
        if self.kind == "discrete_table":
            return float(np.dot(p["probs"], np.abs(p["values"])))
        raise UnsupportedLaw(f"unsupported jump law kind {self.kind!r}")

    def sample_sizes(self, rng, n):
        p = self.params
        if self.kind == "two_point":
            return np.where(rng.random(n) < p["p_plus"], p["plus"], p["minus"])
        if self.kind == "uniform_symmetric":
            return rng.uniform(-p["a"], p["a"], n)
        if self.kind == "laplace":
            return rng.laplace(0.0, p["scale"], n)
        if self.kind == "discrete_table":
            return rng.choice(np.asarray(p["values"], float), size=n, p=p["probs"])
        raise UnsupportedLaw(f"unsupported jump law kind {self.kind!r}")


@dataclass
class LawReport:
    valid: bool
    problems: list
    mean: float = float("nan")
    abs_mean: float = float("nan")

    def to_dict(self):
        return {"valid": self.valid, "problems": list(self.problems),
                "mean": self.mean, "abs_mean": self.abs_mean}


def _finite(*xs):
    return all(isinstance(x, (int, float)) and math.isfinite(x) for x in xs)


def validate_law(law):
    """Check the mean-zero / integrability / rate requirements; never raises."""
    problems = []
    if not isinstance(law.rate, (int, float)) or not math.isfinite(law.rate):
        problems.append("invalid rate: not a finite number")
    elif law.rate < 0:
        problems.append(f"invalid rate: {law.rate} < 0")
    if law.kind not in KINDS:
        problems.append(f"unsupported kind {law.kind!r}")
        return LawReport(False, problems)

    p = law.params
    try:
        if law.kind == "two_point":
            if not _finite(p["plus"], p["minus"]):
                problems.append("non-integrable: jump values not finite")
            if not (_finite(p["p_plus"]) and 0.0 <= p["p_plus"] <= 1.0):
                problems.append("invalid parameter: p_plus outside [0, 1]")
        elif law.kind == "uniform_symmetric":
            if not _finite(p["a"]):
                problems.append("non-integrable: a not finite")
            elif p["a"] < 0:
                problems.append("invalid parameter: a < 0")
        elif law.kind == "laplace":
            if not _finite(p["scale"]):
                problems.append("non-integrable: scale not finite")
            elif p["scale"] <= 0:
                problems.append("invalid parameter: scale <= 0")
        else:
            values, probs = p["values"], p["probs"]
            if len(values) != len(probs) or not values:
                problems.append("invalid parameter: values/probs length mismatch")
            elif not _finite(*values):
                problems.append("non-integrable: table values not finite")
            elif any(q < 0 for q in probs) or abs(sum(probs) - 1.0) > 1e-12:
                problems.append("invalid parameter: probs must be >= 0 and sum to 1")
    except KeyError as exc:
        problems.append(f"missing parameter {exc.args[0]!r}")

    if problems:
        return LawReport(False, problems)
    mean, abs_mean = law.mean(), law.abs_mean()
    if abs(mean) > MEAN_TOL:
        problems.append(f"mean-zero violation: mean = {mean:.17g}")
    return LawReport(not problems, problems, mean, abs_mean)


def require_valid_law(law):
    report = validate_law(law)
    if not report.valid:
        raise InvalidArgument("invalid jump law: " + "; ".join(report.problems))
    return report


def expected_abs_jump_per_unit_time(law):
    """``E[sum_{s<=1} |dL(s)|] = rate * E|J|`` for a compound-Poisson law."""
    if law.kind not in KINDS:
        raise UnsupportedLaw(f"unsupported jump law kind {law.kind!r}")
    return law.rate * law.abs_mean()


@dataclass(frozen=True)
class JumpSchedule:
    times: np.ndarray
    sizes: np.ndarray

    def __len__(self):
        return len(self.times)

    def pairs(self):
        return list(zip(self.times.tolist(), self.sizes.tolist()))


def sample_jump_schedule(master_seed, stream_id, law, horizon):
    """Jump times and sizes of one stream on ``(0, horizon]``.

    Interarrival times and sizes are drawn in fixed blocks, so the schedule on
    a shorter horizon is always a prefix of the schedule on a longer one.
    """
    if horizon < 0:
        raise InvalidArgument(f"horizon must be >= 0, got {horizon}")
    require_valid_law(law)
    if law.rate == 0 or horizon == 0:
        return JumpSchedule(np.empty(0), np.empty(0))
    rng = make_rng(master_seed, "jumps", stream_id)
    times, sizes = [], []
    t = 0.0
    while t <= horizon:
        gaps = rng.exponential(1.0 / law.rate, _BLOCK)
        block = law.sample_sizes(rng, _BLOCK)
        arrivals = t + np.cumsum(gaps)
        times.append(arrivals)
        sizes.append(block)
        t = arrivals[-1]
    times = np.concatenate(times)
    sizes = np.concatenate(sizes).astype(float)
    keep = times <= horizon
    return JumpSchedule(times[keep], sizes[keep])


class NoiseStream:
    """Reproducible noise for one particle (or one rank)."""

    def __init__(self, master_seed, stream_id, law=None, horizon=0.0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self.law = law if law is not None else JumpLaw.none()
        self.horizon = float(horizon)
        self.brownian = make_rng(master_seed, "brownian", stream_id)
        self.reflection = make_rng(master_seed, "reflection", stream_id)
        self.bridge = make_rng(master_seed, "bridge", stream_id)
        self.jump_schedule = sample_jump_schedule(master_seed, stream_id, self.law, horizon)

    def __repr__(self):
        return (f"NoiseStream(master_seed={self.master_seed}, stream_id={self.stream_id}, "
                f"jumps={len(self.jump_schedule)})")

    def normals(self, n):
        return self.brownian.standard_normal(n)

    def uniforms(self, n):
        # (0, 1]: safe under log
        return 1.0 - self.reflection.random(n)

    def bridge_normals(self, n):
        return self.bridge.standard_normal(n)

    def bridge_uniforms(self, n):
        return 1.0 - self.bridge.random(n)


def sample_brownian_increment(stream, dt, sigma):
    """One draw of ``sigma * (B(t + dt) - B(t))``."""
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    if sigma < 0:
        raise InvalidArgument(f"sigma must be >= 0, got {sigma}")
    return float(sigma * math.sqrt(dt) * stream.normals(1)[0])


def system_streams(master_seed, n, law, horizon):
    return [NoiseStream(master_seed, i, law, horizon) for i in range(n)]
