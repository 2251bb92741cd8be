"""Finite rank-based particle systems on the line and on ``[b, inf)``.

Between jump times each particle moves with the drift and volatility of its
current rank (Euler step, ranks frozen at the start of the step and recomputed
every step). Jump times split steps exactly. In the regulated system the
barrier is enforced in one of two ways:

``"bridge"`` (default)
    For every frozen-coefficient sub-step the Skorokhod map is applied to the
    Brownian-bridge interpolation of the step, using an exact draw of the
    bridge minimum. The push at the barrier is recorded as the local-time
    proxy. For a single particle with constant coefficients this is exact in
    law for any step size.
``"projected"``
    Plain projected Euler: clamp to ``b`` after the step, record the clamp.

Local-time proxies are raw pushes. They are not halved, so they correspond to
``2 * Lambda`` under the half-normalised convention for local times.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np

from . import _kernel
from .errors import InvalidArgument
from .levy import JumpLaw, NoiseStream, require_valid_law
from .seeding import derive_seed

MODES = ("unregulated", "regulated")
REFLECTIONS = ("bridge", "projected")


@dataclass
class SystemParams:
    """Rank-indexed coefficients: ``deltas[k]`` is the drift of rank ``k + 1``."""

    deltas: np.ndarray
    sigmas: np.ndarray
    barrier: float = None
    tie_order: np.ndarray = None
    deterministic_test: bool = False

    def __post_init__(self):
        self.deltas = np.atleast_1d(np.asarray(self.deltas, dtype=float))
        self.sigmas = np.atleast_1d(np.asarray(self.sigmas, dtype=float))
        n = self.deltas.shape[0]
        if self.deltas.ndim != 1 or n < 1:
            raise InvalidArgument("deltas must be a non-empty vector")
        if self.sigmas.shape != (n,):
            raise InvalidArgument(f"sigmas must have length N={n}, got {self.sigmas.shape}")
        if not (np.all(np.isfinite(self.deltas)) and np.all(np.isfinite(self.sigmas))):
            raise InvalidArgument("deltas and sigmas must be finite")
        if np.any(self.sigmas < 0):
            raise InvalidArgument("sigmas must be >= 0")
        if np.any(self.sigmas == 0):
            if not self.deterministic_test:
                raise InvalidArgument(
                    "zero volatility requires deterministic_test=True "
                    "(positive volatilities are needed outside test mode)")
            warnings.warn("zero volatility: deterministic test mode, "
                          "outside the positive-volatility regime", stacklevel=3)
        if self.tie_order is None:
            self.tie_order = np.arange(n)
        self.tie_order = np.asarray(self.tie_order, dtype=np.int64)
        if sorted(self.tie_order.tolist()) != list(range(n)):
            raise InvalidArgument("tie_order must be a permutation of 0..N-1")
        if self.barrier is not None:
            self.barrier = float(self.barrier)

    @property
    def N(self):
        return self.deltas.shape[0]

    @property
    def regulated(self):
        return self.barrier is not None

    @classmethod
    def constant(cls, n, delta, sigma, **kw):
        return cls(np.full(n, float(delta)), np.full(n, float(sigma)), **kw)

    def with_coefficients(self, deltas, sigmas):
        """Same barrier and test flag, new coefficients (warned once already)."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return SystemParams(deltas, sigmas, barrier=self.barrier,
                                deterministic_test=self.deterministic_test)

    def to_dict(self):
        return {"deltas": self.deltas.tolist(), "sigmas": self.sigmas.tolist(),
                "barrier": self.barrier, "tie_order": self.tie_order.tolist(),
                "deterministic_test": self.deterministic_test}


@dataclass
class SimConfig:
    horizon: float
    dt: float = 1e-3
    output_grid: np.ndarray = None
    master_seed: int = 0
    mode: str = "unregulated"
    reflection: str = "bridge"

    def __post_init__(self):
        if not (self.dt > 0 and self.dt <= self.horizon):
            raise InvalidArgument(f"need 0 < dt <= horizon, got dt={self.dt}, "
                                  f"horizon={self.horizon}")
        if self.mode not in MODES:
            raise InvalidArgument(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.reflection not in REFLECTIONS:
            raise InvalidArgument(f"reflection must be one of {REFLECTIONS}")
        if self.output_grid is None:
            self.output_grid = np.linspace(0.0, self.horizon, 100)
        self.output_grid = np.unique(np.asarray(self.output_grid, dtype=float))
        if self.output_grid.size == 0:
            raise InvalidArgument("output_grid must not be empty")
        if self.output_grid[0] < 0 or self.output_grid[-1] > self.horizon:
            raise InvalidArgument("output_grid must lie in [0, horizon]")

    def to_dict(self):
        return {"horizon": self.horizon, "dt": self.dt,
                "output_grid": self.output_grid.tolist(),
                "master_seed": self.master_seed, "mode": self.mode,
                "reflection": self.reflection}


@dataclass
class SystemState:
    t: float
    positions: np.ndarray
    regulation: np.ndarray
    barrier_local: np.ndarray
    pair_local: np.ndarray

    @property
    def reflection_accum(self):
        """Barrier pushes per particle followed by sorting pushes per rank pair."""
        return np.concatenate([self.barrier_local, self.pair_local])

    @classmethod
    def initial(cls, positions, t=0.0):
        x = np.array(positions, dtype=float)
        n = x.shape[0]
        return cls(t, x, np.zeros(n), np.zeros(n), np.zeros(max(n - 1, 0)))


@dataclass
class NoiseLog:
    """Per-sub-step raw noise of one run; input of the coupling checks.

    ``dB[k, p]`` is the Brownian increment applied to particle ``p`` in sub-step
    ``k`` and ``order[k, r]`` the particle holding rank ``r`` at its start.
    Jump ``j`` happened after ``jump_after[j]`` sub-steps.
    """

    times: np.ndarray
    h: np.ndarray
    dB: np.ndarray
    order: np.ndarray
    ordered_after: np.ndarray
    jump_times: np.ndarray
    jump_after: np.ndarray
    jump_particle: np.ndarray
    jump_rank: np.ndarray
    jump_size: np.ndarray
    jump_ordered_after: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    regulation: np.ndarray
    params: SystemParams
    config: SimConfig
    final: SystemState
    initial: np.ndarray = None
    replica: int = 0
    noise_log: NoiseLog = None
    extra: dict = field(default_factory=dict)

    @property
    def ordered(self):
        return ordered_rows(self.positions, self.params.tie_order)

    @property
    def gaps(self):
        y = self.ordered
        if self.config.mode == "regulated":
            return y - self.params.barrier
        return y[..., 1:] - y[..., :1]

    @property
    def adjacent_gaps(self):
        y = self.ordered
        return np.diff(y, axis=-1)


@dataclass
class BatchResult:
    """Grid-time records of many replicas: arrays shaped ``(R, G, N)``."""

    times: np.ndarray
    positions: np.ndarray
    regulation: np.ndarray
    params: SystemParams
    config: SimConfig
    replicas: np.ndarray

    @property
    def ordered(self):
        return ordered_rows(self.positions, self.params.tie_order)

    @property
    def gaps(self):
        y = self.ordered
        if self.config.mode == "regulated":
            return y - self.params.barrier
        return y[..., 1:] - y[..., :1]


def ordered_rows(positions, tie_order):
    x = np.asarray(positions, dtype=float)
    perm = np.argsort(np.asarray(tie_order), kind="stable")
    idx = np.argsort(x[..., perm], axis=-1, kind="stable")
    return np.take_along_axis(x[..., perm], idx, axis=-1)


def rank_assignment(positions, tie_order=None):
    """Return ``pi`` with ``pi[p]`` the 0-based rank of particle ``p``.

    ``tie_order[p]`` is the tie priority of particle ``p``: among equal
    positions the lower priority value gets the lower rank.
    """
    x = np.asarray(positions, dtype=float)
    n = x.shape[0]
    if tie_order is None:
        tie_order = np.arange(n)
    tie_order = np.asarray(tie_order)
    if tie_order.shape != (n,):
        raise InvalidArgument("positions and tie_order must have equal length")
    order = np.lexsort((tie_order, x))
    pi = np.empty(n, dtype=np.int64)
    pi[order] = np.arange(n)
    return pi


def _tie_perm(params):
    # the kernel takes the per-particle tie priority directly
    return np.ascontiguousarray(params.tie_order, dtype=np.int64)


def _no_jumps(n):
    return (np.empty(0), np.empty(0, np.int64), np.empty(0), np.empty((0, n)),
            np.empty((0, n)))


def _run(X, params, b, regulated, bridge, T, Z, U, jumps, rec, R, bl, pl, *,
         rank_noise=False, abs_jumps=False, outs=None, M=0, act=None, log=None):
    n = X.shape[0]
    jt, jw, js, BZ, BU = jumps
    if outs is None:
        G = int(rec.sum())
        outs = (np.empty(G), np.empty((G, n)), np.empty((G, n)))
    if act is None:
        act = (np.ones(n, np.bool_), np.zeros(n), np.zeros(n, np.int64), np.zeros(n),
               np.zeros(n))
    if log is None:
        e, ei = np.empty(0), np.empty(0, np.int64)
        log = (False, e, e, np.empty((0, n)), np.empty((0, n), np.int64), np.empty((0, n)),
               ei, ei, ei, e, np.empty((0, n)))
    return _kernel.run_row(X, params.deltas, params.sigmas, float(b), regulated, bridge,
                           _tie_perm(params), rank_noise, abs_jumps, T, Z, U, jt, jw, js,
                           BZ, BU, rec, *outs, R, bl, pl, int(M), *act, *log)


def _mode_flags(params, config):
    regulated = config.mode == "regulated"
    if regulated and params.barrier is None:
        raise InvalidArgument("regulated mode requires a barrier")
    b = params.barrier if regulated else 0.0
    return regulated, b


def step_continuous(state, params, noise, dt, mode="unregulated", reflection="bridge",
                    normals=None, uniforms=None):
    """Advance ``state`` by one jump-free Euler step of length ``dt``.

    ``normals``/``uniforms`` override the per-particle draws from ``noise``
    (one :class:`NoiseStream` per particle). Returns a new state.
    """
    if not dt > 0:
        raise InvalidArgument(f"dt must be > 0, got {dt}")
    n = params.N
    regulated = mode == "regulated"
    b = params.barrier if regulated else 0.0
    if normals is None:
        normals = np.array([s.normals(1)[0] for s in noise])
    if uniforms is None:
        uniforms = (np.array([s.uniforms(1)[0] for s in noise]) if regulated
                    else np.ones(n))
    X = state.positions.astype(float).copy()
    R = state.regulation.copy()
    bl = state.barrier_local.copy()
    buf = np.zeros(max(n - 1, 1))
    buf[: max(n - 1, 0)] = state.pair_local
    T = np.array([0.0, float(dt)])
    Z = np.asarray(normals, float).reshape(1, n)
    U = np.asarray(uniforms, float).reshape(1, n)
    _run(X, params, b, regulated, reflection == "bridge", T, Z, U,
         _no_jumps(n), np.zeros(2, np.bool_), R, bl, buf)
    return SystemState(state.t + dt, X, R, bl, buf[: max(n - 1, 0)])


def apply_jump(state, particle, size, params, mode="unregulated"):
    """Jump of ``particle`` by ``size``; regulated mode places it at ``b`` if it
    lands below, adding the shortfall to its regulation."""
    if not np.isfinite(size):
        raise InvalidArgument("jump size must be finite")
    X = state.positions.astype(float).copy()
    R = state.regulation.copy()
    xn = X[particle] + size
    if mode == "regulated":
        b = params.barrier
        if xn < b:
            R[particle] += b - xn
            xn = b
    X[particle] = xn
    return SystemState(state.t, X, R, state.barrier_local.copy(), state.pair_local.copy())


def base_times(config):
    """Euler grid merged with the output grid; returns ``(T, record_mask)``."""
    dt, horizon = config.dt, config.horizon
    n = int(np.floor(horizon / dt + 1e-9))
    tol = 1e-9 * dt
    cand = np.concatenate([np.arange(n + 1) * dt, [horizon]])
    grid = config.output_grid
    pts = np.concatenate([cand, grid])
    is_grid = np.concatenate([np.zeros(cand.size, bool), np.ones(grid.size, bool)])
    o = np.lexsort((~is_grid, pts))
    v, g = pts[o], is_grid[o]
    # clusters of points closer than tol collapse to one, preferring a grid value
    start = np.concatenate([[True], np.diff(v) > tol])
    cid = np.cumsum(start) - 1
    T = v[start].copy()
    mark = np.zeros(T.size, bool)
    np.logical_or.at(mark, cid, g)
    gi = np.flatnonzero(g)
    T[cid[gi]] = v[gi]
    return T, mark


def replica_streams(config, n, law, replica, tag="replica"):
    master = derive_seed(config.master_seed, tag, replica)
    return [NoiseStream(master, i, law, config.horizon) for i in range(n)]


def _row_noise(streams, S, regulated):
    n = len(streams)
    Z = np.empty((S, n))
    U = np.empty((S, n)) if regulated else np.ones((S, n))
    for i, st in enumerate(streams):
        Z[:, i] = st.normals(S)
        if regulated:
            U[:, i] = st.uniforms(S)
    jt = np.concatenate([st.jump_schedule.times for st in streams])
    jw = np.concatenate([np.full(len(st.jump_schedule), i, np.int64)
                         for i, st in enumerate(streams)])
    js = np.concatenate([st.jump_schedule.sizes for st in streams])
    o = np.lexsort((jw, jt))
    jt, jw, js = jt[o], jw[o], js[o]
    J = jt.size
    BZ = np.empty((J, n))
    BU = np.ones((J, n))
    for i, st in enumerate(streams):
        BZ[:, i] = st.bridge_normals(J)
        if regulated:
            BU[:, i] = st.bridge_uniforms(J)
    return Z, U, jt, jw, js, BZ, BU


def run_system(params, config, initial, streams, *, rank_noise=False, abs_jumps=False,
               record_noise=False, activation_M=0, active=None):
    """Run one system with explicit noise streams.

    Returns ``(times, positions, regulation, final_state, noise_log, activation)``.
    """
    regulated, b = _mode_flags(params, config)
    x0 = np.array(initial, dtype=float)
    n = params.N
    if x0.shape != (n,):
        raise InvalidArgument(f"initial must have length N={n}")
    if len(streams) != n:
        raise InvalidArgument("need one noise stream per particle (or rank)")
    T, rec = base_times(config)
    S = T.size - 1
    Z, U, jt, jw, js, BZ, BU = _row_noise(streams, S, regulated)
    J = jt.size
    G = int(rec.sum())
    outT = np.empty(G)
    outX = np.empty((G, n))
    outR = np.empty((G, n))
    R = np.zeros(n)
    bl = np.zeros(n)
    pl = np.zeros(max(n - 1, 1))
    if active is None:
        active = np.ones(n, np.bool_)
    active = np.asarray(active, np.bool_).copy()
    act_time = np.where(active, 0.0, np.inf)
    act_cause = np.full(n, -1, np.int64)
    act_level = np.full(n, np.nan)
    act_pos = np.full(n, np.nan)
    K = S + J if record_noise else 0
    log_t = np.empty(K)
    log_h = np.empty(K)
    log_dB = np.empty((K, n))
    log_order = np.empty((K, n), np.int64)
    log_Y = np.empty((K, n))
    Jl = J if record_noise else 0
    jl_k = np.empty(Jl, np.int64)
    jl_p = np.empty(Jl, np.int64)
    jl_r = np.empty(Jl, np.int64)
    jl_s = np.empty(Jl)
    jl_Y = np.empty((Jl, n))
    X = x0.copy()
    k, _ = _run(X, params, b, regulated, config.reflection == "bridge", T, Z, U,
                (jt, jw, js, BZ, BU), rec, R, bl, pl, rank_noise=rank_noise,
                abs_jumps=abs_jumps, outs=(outT, outX, outR), M=activation_M,
                act=(active, act_time, act_cause, act_level, act_pos),
                log=(record_noise, log_t, log_h, log_dB, log_order, log_Y,
                     jl_k, jl_p, jl_r, jl_s, jl_Y))
    final = SystemState(float(T[-1]), X, R, bl, pl[: max(n - 1, 0)])
    log = None
    if record_noise:
        log = NoiseLog(log_t[:k], log_h[:k], log_dB[:k], log_order[:k], log_Y[:k],
                       jt.copy(), jl_k, jl_p, jl_r, jl_s, jl_Y)
    activation = {"active": active, "time": act_time, "cause": act_cause,
                  "level": act_level, "position": act_pos}
    return outT, outX, outR, final, log, activation


def _check_initial(params, config, x0):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != params.N:
        raise InvalidArgument(f"initial must have length N={params.N}")
    if np.any(np.diff(x0, axis=-1) < 0):
        raise InvalidArgument("initial positions must be sorted nondecreasing")
    if config.mode == "regulated":
        if params.barrier is None:
            raise InvalidArgument("regulated mode requires a barrier")
        if np.any(x0 < params.barrier):
            raise InvalidArgument("initial positions must be >= barrier in regulated mode")
    return x0


def simulate(params, config, initial, law=None, *, replica=0, record_noise=False):
    """Simulate one replica and record it on ``config.output_grid``."""
    law = law if law is not None else JumpLaw.none()
    require_valid_law(law)
    x0 = _check_initial(params, config, initial)
    streams = replica_streams(config, params.N, law, replica)
    times, X, R, final, log, _ = run_system(params, config, x0, streams,
                                            record_noise=record_noise)
    return Trajectory(times, X, R, params, config, final, initial=x0.copy(),
                      replica=replica, noise_log=log)


def simulate_batch(params, config, initial, law=None, replicas=100, *, replica_offset=0,
                   tag="replica", workers=1):
    """Independent replicas; row ``r`` equals ``simulate(..., replica=r)``.

    ``initial`` is either one vector shared by all replicas or one row each.
    With ``workers > 1`` replicas are split into contiguous chunks run in
    separate processes and merged in replica order, so the result does not
    depend on the worker count.
    """
    law = law if law is not None else JumpLaw.none()
    require_valid_law(law)
    idx = (np.arange(replicas) + replica_offset if np.isscalar(replicas)
           else np.asarray(replicas))
    x0 = _check_initial(params, config, initial)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (idx.size, params.N))
    if workers > 1 and idx.size > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(np.arange(idx.size), min(workers, idx.size))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_batch_chunk, [(params, config, x0[c], law, idx[c], tag)
                                               for c in chunks]))
        return BatchResult(parts[0].times, np.concatenate([q.positions for q in parts]),
                           np.concatenate([q.regulation for q in parts]), params, config, idx)
    T, rec = base_times(config)
    G = int(rec.sum())
    pos = np.empty((idx.size, G, params.N))
    reg = np.empty((idx.size, G, params.N))
    times = None
    for row, r in enumerate(idx):
        streams = replica_streams(config, params.N, law, int(r), tag=tag)
        times, X, R, _, _, _ = run_system(params, config, x0[row], streams)
        pos[row] = X
        reg[row] = R
    return BatchResult(times, pos, reg, params, config, idx)


def _batch_chunk(args):
    params, config, x0, law, idx, tag = args
    return simulate_batch(params, config, x0, law, idx, tag=tag)
