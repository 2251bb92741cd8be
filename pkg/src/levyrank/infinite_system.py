"""Finite truncations of the infinite systems.

Regulated, constant coefficients: particles do not interact, so the
truncation is ``K`` independent single-particle regulated systems. Particle
``i`` of replica ``r`` always uses the same noise stream, so enlarging ``K``
only adds particles and leaves the existing paths unchanged.

Unregulated: particles that have ever been among the lowest ``M`` active
particles form the active set and follow the rank-based dynamics among
themselves; inactive particles move with the tail drift ``delta_M``. An
inactive particle is activated once it is at or below the ``M``-th lowest
active particle, checked after every sub-step and jump.
"""
from dataclasses import dataclass, field

import numpy as np

from .conditions import check_infinite_initial
from .errors import InvalidArgument
from .finite_system import (SimConfig, Trajectory, base_times,
                            replica_streams, run_system)
from .levy import JumpLaw, NoiseStream, require_valid_law
from .seeding import derive_seed, make_rng

N_PATHS = 10_000
RATIO_CAP = 0.999


@dataclass
class InfiniteInitial:
    """``X_i(0)`` for ``i = 1, 2, ...``: an explicit prefix, then
    ``max(prefix[-1], gamma1 * i + gamma2)``."""

    explicit_prefix: np.ndarray = field(default_factory=lambda: np.empty(0))
    gamma1: float = 1.0
    gamma2: float = 0.0

    def __post_init__(self):
        self.explicit_prefix = np.asarray(self.explicit_prefix, dtype=float)
        if np.any(np.diff(self.explicit_prefix) < 0):
            raise InvalidArgument("explicit prefix must be nondecreasing")

    @property
    def prefix_length(self):
        return self.explicit_prefix.size

    def positions(self, K):
        """The first ``K`` starting positions."""
        m = self.prefix_length
        if K <= m:
            return self.explicit_prefix[:K].copy()
        i = np.arange(m + 1, K + 1)
        tail = self.gamma1 * i + self.gamma2
        if m:
            tail = np.maximum(tail, self.explicit_prefix[-1])
        return np.concatenate([self.explicit_prefix, tail])

    def report(self):
        return check_infinite_initial(self)


@dataclass
class ActivationSchedule:
    """Activation times ``rho_0 = 0 <= rho_1 <= ...`` and nested active sets."""

    rho: np.ndarray
    sets: list
    particle_time: np.ndarray
    cause: np.ndarray
    level: np.ndarray
    position: np.ndarray
    M: int

    def activations(self):
        """``(particle, time, cause, level, position)`` for every particle
        activated after time 0, in time order."""
        idx = np.flatnonzero(np.isfinite(self.particle_time) & (self.particle_time > 0))
        idx = idx[np.argsort(self.particle_time[idx], kind="stable")]
        return [(int(p), float(self.particle_time[p]), int(self.cause[p]),
                 float(self.level[p]), float(self.position[p])) for p in idx]


def _sup_paths(law, sigma1, horizon, n_paths, rng, n_grid=1000):
    """Samples of ``sup_{s <= horizon} (-sigma1 B(s) - L(s))``.

    Between grid and jump points the Brownian maximum is drawn exactly from
    the bridge law, so the supremum is not biased low by the grid.
    """
    grid = np.linspace(0.0, horizon, n_grid + 1)
    out = np.empty(n_paths)
    for k in range(n_paths):
        nj = rng.poisson(law.rate * horizon) if law.rate > 0 else 0
        jt = np.sort(rng.uniform(0.0, horizon, nj))
        js = law.sample_sizes(rng, nj) if nj else np.empty(0)
        t = np.concatenate([grid, jt])
        o = np.argsort(t, kind="stable")
        t = t[o]
        is_jump = np.concatenate([np.zeros(grid.size, bool), np.ones(nj, bool)])[o]
        dt = np.diff(t)
        W = np.concatenate([[0.0], np.cumsum(sigma1 * np.sqrt(dt) * rng.standard_normal(dt.size))])
        jump_at = np.zeros(t.size)
        jump_at[is_jump] = -js
        # -L is right-continuous: value at each point includes jumps at it
        negL = np.cumsum(jump_at)
        left = -W[:-1] + negL[:-1]
        right = -W[1:] + negL[:-1]
        u = 1.0 - rng.random(dt.size)
        bridge_max = 0.5 * (left + right + np.sqrt((right - left) ** 2
                                                   - 2.0 * sigma1 ** 2 * dt * np.log(u)))
        vals = -W + negL
        out[k] = max(vals.max(), bridge_max.max() if dt.size else -np.inf)
    return out


def tail_probabilities(initial, sup_samples, y, allowance, K_max):
    thr = initial.positions(K_max) - y - allowance
    srt = np.sort(sup_samples)
    # P(sup >= thr) from the sorted sample
    return 1.0 - np.searchsorted(srt, thr, side="left") / srt.size


def choose_truncation(initial, law, sigma1, max_drift_abs, horizon, y, epsilon=1e-3, *,
                      master_seed=0, n_paths=N_PATHS, return_details=False):
    """Smallest ``K`` whose estimated union bound over particles beyond ``K``
    reaching level ``y`` within ``horizon`` is at most ``epsilon``.

    ``p_i = P(sup (-sigma1 B - L) >= X_i(0) - y - max_drift_abs * horizon)`` is
    estimated from ``n_paths`` driving paths. Past the last index with a
    positive estimate the tail is extended geometrically, with the ratio
    fitted on the estimates strictly between 0 and 1. ``K`` is at least the
    prefix length.
    """
    if not initial.gamma1 > 0:
        raise InvalidArgument("gamma1 must be > 0: the union bound may diverge otherwise")
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be > 0")
    require_valid_law(law)
    rng = make_rng(master_seed, "truncation", 0)
    if sigma1 == 0 and law.rate == 0:
        sup = np.zeros(1)
    else:
        sup = _sup_paths(law, float(sigma1), float(horizon), int(n_paths), rng)
    allowance = float(max_drift_abs) * float(horizon)
    # first index whose threshold exceeds every sample: estimates vanish beyond it
    top = sup.max() + y + allowance
    K_max = initial.prefix_length + 1
    while initial.positions(K_max)[-1] <= top:
        K_max = max(2 * K_max, K_max + 1)
    p = tail_probabilities(initial, sup, y, allowance, K_max)
    nz = np.flatnonzero(p > 0)
    last = int(nz[-1]) if nz.size else -1
    fit = np.flatnonzero((p > 0) & (p < 1))
    if fit.size >= 2:
        slope = np.polyfit(fit.astype(float), np.log(p[fit]), 1)[0]
        ratio = min(float(np.exp(slope)), RATIO_CAP)
    elif fit.size == 1:
        ratio = min(float(p[fit[0]]), RATIO_CAP)
    else:
        ratio = 0.0
    extra = p[last] * ratio / (1.0 - ratio) if last >= 0 and ratio > 0 else 0.0
    # tail[k] = sum_{i > k} p_i with 0-based i, i.e. the bound for K = k
    tail = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]]) + extra
    ok = np.flatnonzero(tail <= epsilon)
    K = max(initial.prefix_length, int(ok[0]) if ok.size else K_max)
    if return_details:
        return K, {"p": p, "ratio": ratio, "extra": extra, "tail": tail}
    return K


def _constant_params(params):
    if np.ptp(params.deltas) != 0 or np.ptp(params.sigmas) != 0:
        raise InvalidArgument("the infinite regulated system needs constant drift "
                              "and volatility")
    if params.barrier is None:
        raise InvalidArgument("the infinite regulated system needs a barrier")
    return params.with_coefficients(params.deltas[:1], params.sigmas[:1])


@dataclass
class InfiniteRegulatedRun:
    times: np.ndarray
    positions: np.ndarray
    regulation: np.ndarray
    barrier: float
    stream_master: int

    @property
    def gaps(self):
        """Order statistics of the truncated ensemble minus the barrier."""
        return np.sort(self.positions, axis=-1) - self.barrier


def simulate_infinite_regulated(initial, K, params, config, law=None, *, replica=0):
    """``K`` independent single-particle regulated systems (one replica)."""
    p1 = _constant_params(params)
    if config.mode != "regulated":
        raise InvalidArgument("config.mode must be 'regulated'")
    law = law if law is not None else JumpLaw.none()
    require_valid_law(law)
    x0 = initial.positions(K) if isinstance(initial, InfiniteInitial) \
        else np.asarray(initial, dtype=float)[:K]
    if np.any(x0 < params.barrier):
        raise InvalidArgument("initial positions must be >= barrier")
    master = derive_seed(config.master_seed, "replica", replica)
    T, rec = base_times(config)
    G = int(rec.sum())
    pos = np.empty((G, K))
    reg = np.empty((G, K))
    times = None
    for i in range(K):
        stream = NoiseStream(master, i, law, config.horizon)
        times, X, R, _, _, _ = run_system(p1, config, x0[i:i + 1], [stream])
        pos[:, i] = X[:, 0]
        reg[:, i] = R[:, 0]
    return InfiniteRegulatedRun(times, pos, reg, params.barrier, master)


@dataclass
class TightnessReport:
    times: np.ndarray
    coords: list
    q95: dict
    ratio: dict
    max_ratio: float
    replicas: int

    def to_dict(self):
        return {"times": self.times.tolist(), "coords": list(self.coords),
                "q95": {str(j): v.tolist() for j, v in self.q95.items()},
                "ratio": {str(j): v for j, v in self.ratio.items()},
                "max_ratio": self.max_ratio, "replicas": self.replicas}


def _ratio(top, mid):
    # a zero median means the coordinate sits at the barrier most of the time
    if mid > 0:
        return float(top / mid)
    return 1.0 if top == 0 else float("inf")


def tightness_diagnostic(coords, times, replicas, initial, K, params, config, law=None,
                         q=0.95):
    """95% quantile of ``Z^R_j(t)`` across replicas per time, and
    ``max_t q_j(t) / median_t q_j(t)`` per coordinate (``j`` is 1-based)."""
    coords = [int(j) for j in coords]
    if any(j < 1 or j > K for j in coords):
        raise InvalidArgument(f"coordinates must lie in 1..{K}")
    times = np.asarray(times, dtype=float)
    cfg = SimConfig(horizon=float(times.max()), dt=config.dt, output_grid=times,
                    master_seed=config.master_seed, mode="regulated",
                    reflection=config.reflection)
    samples = np.empty((replicas, times.size, len(coords)))
    for r in range(replicas):
        run = simulate_infinite_regulated(initial, K, params, cfg, law, replica=r)
        samples[r] = run.gaps[:, [j - 1 for j in coords]]
    quant = np.quantile(samples, q, axis=0)
    q95 = {j: quant[:, c] for c, j in enumerate(coords)}
    ratio = {j: _ratio(v.max(), np.median(v)) for j, v in q95.items()}
    return TightnessReport(cfg.output_grid, coords, q95, ratio, max(ratio.values()),
                           replicas)


@dataclass
class InfiniteUnregulatedRun:
    trajectory: Trajectory
    schedule: ActivationSchedule
    tolerance: float


def _schedule(act, M):
    t = act["time"]
    rho = np.unique(np.concatenate([[0.0], t[np.isfinite(t)]]))
    sets = [np.flatnonzero(t <= r) for r in rho]
    return ActivationSchedule(rho, sets, t, act["cause"], act["level"], act["position"], M)


def activation_tolerance(params, dt):
    """One Euler step's worth of drift plus four standard deviations."""
    return dt * float(np.max(np.abs(params.deltas))) + 4.0 * float(np.max(params.sigmas)) \
        * np.sqrt(dt)


def simulate_infinite_unregulated(initial, K, params, config, law=None, *, M=None, replica=0):
    """Truncation to ``K`` particles of the unregulated system with tail drift
    ``delta_M``; returns the run and its activation schedule."""
    M = int(M if M is not None else params.deltas.size)
    if M < 1 or M > params.deltas.size:
        raise InvalidArgument("M must be in 1..len(deltas)")
    if K < M:
        raise InvalidArgument(f"K={K} must be >= M={M}")
    if np.ptp(params.sigmas) != 0:
        raise InvalidArgument("the infinite unregulated system needs constant volatility")
    if np.ptp(params.deltas[M - 1:]) != 0:
        raise InvalidArgument(f"drifts must be constant from rank M={M} on")
    if config.mode != "unregulated":
        raise InvalidArgument("config.mode must be 'unregulated'")
    law = law if law is not None else JumpLaw.none()
    require_valid_law(law)
    x0 = initial.positions(K) if isinstance(initial, InfiniteInitial) \
        else np.asarray(initial, dtype=float)[:K]
    if np.any(np.diff(x0) < 0):
        raise InvalidArgument("initial positions must be nondecreasing")
    deltas = np.concatenate([params.deltas[:M], np.full(K - M, params.deltas[M - 1])])
    pK = params.with_coefficients(deltas, np.full(K, params.sigmas[0]))
    active = np.zeros(K, bool)
    active[np.lexsort((pK.tie_order, x0))[:M]] = True
    streams = replica_streams(config, K, law, replica)
    times, X, R, final, _, act = run_system(pK, config, x0, streams, activation_M=M,
                                            active=active)
    traj = Trajectory(times, X, R, pK, config, final, initial=x0.copy(), replica=replica)
    return InfiniteUnregulatedRun(traj, _schedule(act, M),
                                  activation_tolerance(pK, config.dt))
