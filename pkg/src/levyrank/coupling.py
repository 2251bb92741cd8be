"""Pathwise couplings from the stability arguments, as runnable checks.

* :func:`simulate_dominator_gap` builds a one-dimensional process reflected
  at 0 that bounds an adjacent gap ``Y_{i+1} - Y_i`` from the rank-indexed
  noise of the same run.
* :func:`simulate_H` bounds one particle of a constant-coefficient regulated
  system by the reflected path that uses ``|jump|`` in place of each jump.
* :func:`simulate_rank_coupled_pair` runs two regulated systems on the same
  rank-attached noise; their ordered vectors stay componentwise ordered.

All statements are checked on the discrete scheme itself, so they hold exactly
(up to rounding) rather than in the limit ``dt -> 0``.

Dominator step
--------------
With rank increments ``a_r = delta_r h + sigma_r beta_r`` over a sub-step,
``xi = a_{i+1} - a_i`` and spread ``R = max(a) - min(a)``, the gap obeys
``gap' <= max(gap + xi, min(gap, R) + R)``: if ``gap >= R`` no particle can
cross between ranks ``i`` and ``i+1``, otherwise the order-statistic Lipschitz
bound gives ``gap + R``. The right side is nondecreasing in ``gap``, so the
recursion ``D' = max(D + xi, min(D, R) + R)`` dominates by induction. It
equals the drift-plus-noise step reflected at 0 except within ``O(R)`` of 0.
A jump of one particle by ``s`` moves every adjacent gap by at most ``|s|``.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidArgument
from .finite_system import (Trajectory, _check_initial,
                            replica_streams, run_system)
from .levy import JumpLaw, NoiseStream, require_valid_law


@dataclass
class RankedNoise:
    """Rank-indexed noise of one run.

    ``beta[k, r]`` is the Brownian increment of the particle holding rank
    ``r`` at the start of sub-step ``k`` and ``lam[j, r]`` the size of jump
    ``j`` if its owner held rank ``r`` just before it (zero elsewhere).
    """

    times: np.ndarray
    h: np.ndarray
    beta: np.ndarray
    jump_after: np.ndarray
    jump_rank: np.ndarray
    jump_size: np.ndarray
    jump_times: np.ndarray

    @property
    def N(self):
        return self.beta.shape[1]

    @property
    def lam(self):
        out = np.zeros((self.jump_size.size, self.N))
        out[np.arange(self.jump_size.size), self.jump_rank] = self.jump_size
        return out


@dataclass
class DominatorPath:
    times: np.ndarray
    values: np.ndarray
    correction: np.ndarray
    level: float = 0.0
    start: float = 0.0


def extract_ranked_noise(trajectory):
    log = getattr(trajectory, "noise_log", None)
    if log is None:
        raise InvalidArgument("trajectory has no raw increments; "
                              "simulate with record_noise=True")
    beta = np.take_along_axis(log.dB, log.order, axis=1)
    return RankedNoise(log.times, log.h, beta, log.jump_after, log.jump_rank,
                       log.jump_size, log.jump_times)


@njit(cache=True)
def _dominator(y, i, h, beta, delta, sigma, jump_after, jump_size, out, corr):
    # out/corr: one entry per sub-step and per jump, in event order
    K = h.shape[0]
    J = jump_after.shape[0]
    N = beta.shape[1]
    D = y
    c = 0.0
    e = 0
    jp = 0
    while jp < J and jump_after[jp] == 0:
        D += abs(jump_size[jp])
        out[e] = D
        corr[e] = c
        e += 1
        jp += 1
    for k in range(K):
        amax = -np.inf
        amin = np.inf
        for r in range(N):
            a = delta[r] * h[k] + sigma[r] * beta[k, r]
            amax = max(amax, a)
            amin = min(amin, a)
        R = amax - amin
        xi = (delta[i + 1] * h[k] + sigma[i + 1] * beta[k, i + 1]
              - delta[i] * h[k] - sigma[i] * beta[k, i])
        free = D + xi
        Dn = max(free, min(D, R) + R)
        c += Dn - free
        D = Dn
        out[e] = D
        corr[e] = c
        e += 1
        while jp < J and jump_after[jp] == k + 1:
            D += abs(jump_size[jp])
            out[e] = D
            corr[e] = c
            e += 1
            jp += 1


def _event_times(noise):
    # sub-step ends and jump times merged in event order
    K, J = noise.h.size, noise.jump_after.size
    times = np.empty(K + J)
    is_jump = np.zeros(K + J, bool)
    pos = np.arange(K) + np.searchsorted(noise.jump_after, np.arange(K) + 1, side="left")
    jpos = np.arange(J) + noise.jump_after
    times[pos] = noise.times
    times[jpos] = noise.jump_times
    is_jump[jpos] = True
    return times, is_jump, pos, jpos


def simulate_dominator_gap(i, y, params, ranked_noise):
    """Dominator of the adjacent gap between ranks ``i`` and ``i + 1`` (1-based).

    Values are reported after every sub-step and every jump.
    """
    n = params.N
    if not (isinstance(i, (int, np.integer)) and 1 <= i <= n - 1):
        raise InvalidArgument(f"rank index must be in 1..{n - 1}, got {i}")
    if y < 0:
        raise InvalidArgument("dominator start must be >= 0")
    rn = ranked_noise
    K, J = rn.h.size, rn.jump_after.size
    out = np.empty(K + J)
    corr = np.empty(K + J)
    _dominator(float(y), i - 1, rn.h, rn.beta, params.deltas, params.sigmas,
               rn.jump_after.astype(np.int64), rn.jump_size, out, corr)
    times, _, _, _ = _event_times(rn)
    return DominatorPath(times, out, corr, 0.0, float(y))


def _event_gaps(trajectory):
    log = trajectory.noise_log
    K, J = log.h.size, log.jump_after.size
    Y = np.empty((K + J, trajectory.params.N))
    pos = np.arange(K) + np.searchsorted(log.jump_after, np.arange(K) + 1, side="left")
    jpos = np.arange(J) + log.jump_after
    Y[pos] = log.ordered_after
    Y[jpos] = log.jump_ordered_after
    return np.diff(Y, axis=1)


def dominators_for(trajectory, starts=None):
    """All ``N - 1`` gap dominators of a recorded run (starts default to the
    initial adjacent gaps)."""
    rn = extract_ranked_noise(trajectory)
    y0 = np.diff(np.sort(trajectory.initial))
    if starts is None:
        starts = y0
    return [simulate_dominator_gap(i + 1, float(starts[i]), trajectory.params, rn)
            for i in range(trajectory.params.N - 1)]


def verify_gap_domination(trajectory, dominators=None):
    """``max_{i,t} (gap_i(t) - D_i(t))`` over every sub-step end and jump."""
    if dominators is None:
        dominators = dominators_for(trajectory)
    gaps = _event_gaps(trajectory)
    y0 = np.diff(np.sort(trajectory.initial))
    worst = -np.inf
    for k, d in enumerate(dominators):
        worst = max(worst, y0[k] - d.start)
        if d.values.size:
            worst = max(worst, float(np.max(gaps[:, k] - d.values)))
    return float(worst)


def _constant(params):
    if np.ptp(params.deltas) != 0 or np.ptp(params.sigmas) != 0:
        raise InvalidArgument("H dominator needs constant drift and volatility")
    if params.barrier is None:
        raise InvalidArgument("H dominator needs a barrier")
    return params.with_coefficients(params.deltas[:1], params.sigmas[:1])


def simulate_H(x0, params, config, stream_key, law=None):
    """Reflected path fed by the same Brownian motion as one particle and the
    absolute values of its jumps.

    ``stream_key`` is ``(stream_master, stream_id)`` of the particle's
    :class:`NoiseStream`; the particle is replayed from a fresh copy.
    """
    p1 = _constant(params)
    law = law if law is not None else JumpLaw.none()
    master, sid = stream_key
    stream = NoiseStream(master, sid, law, config.horizon)
    times, X, R, _, _, _ = run_system(p1, config, [float(x0)], [stream], abs_jumps=True)
    return DominatorPath(times, X[:, 0], R[:, 0], params.barrier, float(x0))


@dataclass
class CoupledPair:
    low: Trajectory
    high: Trajectory
    violations: int
    max_violation: float


def simulate_rank_coupled_pair(params, init_low, init_high, config, law=None, replica=0):
    """Two regulated systems driven by the same rank-attached noise."""
    if params.barrier is None or config.mode != "regulated":
        raise InvalidArgument("rank-coupled pair needs a regulated configuration")
    law = law if law is not None else JumpLaw.none()
    require_valid_law(law)
    lo = _check_initial(params, config, init_low)
    hi = _check_initial(params, config, init_high)
    if np.any(lo > hi):
        raise InvalidArgument("init_low must be <= init_high componentwise")
    trajs = []
    for x0 in (lo, hi):
        streams = replica_streams(config, params.N, law, replica, tag="coupled")
        times, X, R, final, _, _ = run_system(params, config, x0, streams, rank_noise=True)
        trajs.append(Trajectory(times, X, R, params, config, final, initial=x0.copy(),
                                replica=replica))
    diff = trajs[0].ordered - trajs[1].ordered
    return CoupledPair(trajs[0], trajs[1], int(np.sum(diff > 0)), float(diff.max()))
