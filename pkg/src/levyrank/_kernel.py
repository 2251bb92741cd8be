"""Compiled stepping kernel for one system (one replica).

The kernel walks the base time grid ``T``. Inside a base step every jump time
splits the step; the Brownian increment of the remaining interval is divided
by a Brownian-bridge draw so that the sub-increments add up to the base
increment. Ranks are frozen at the start of each continuous sub-step.

``prio`` is the tie priority of each particle (lower value ranks lower among
equal positions).

Noise indexing: ``w`` columns of ``Z``/``U``/``BZ``/``BU`` and the jump owner
``jw`` refer to particles when ``rank_noise`` is false and to ranks otherwise.
Logged increments ``log_dB`` use the same indexing.

The loop is written flat on purpose: helper calls on arrays inside the hot
loop make numba emit reference-count traffic that costs more than the step.
"""
import math

import numpy as np
from numba import njit

CAUSE_DIFFUSION = 0
CAUSE_JUMP = 1


@njit(cache=True)
def run_row(X, delta, sigma, b, regulated, bridge, prio, rank_noise, abs_jumps,
            T, Z, U, jt, jw, js, BZ, BU, rec,
            outT, outX, outR, R, barrier_lt, pair_lt,
            M, active, act_time, act_cause, act_level, act_pos,
            log_on, log_t, log_h, log_dB, log_order, log_Y,
            jl_k, jl_p, jl_r, jl_s, jl_Y):
    """Advance one system over ``T``; returns ``(n_substeps, n_jumps)``."""
    N = X.shape[0]
    S = T.shape[0] - 1
    J = jt.shape[0]
    order = np.arange(N)
    prev = np.empty(N, np.int64)
    rank_of = np.empty(N, np.int64)
    dB_out = np.zeros(N)
    W = np.empty(N)
    h = 0.0
    n_active = 0
    for p in range(N):
        if active[p]:
            n_active += 1

    g = 0
    k = 0
    jp = 0
    s = 0
    t = T[0]
    if S > 0:
        sq = math.sqrt(T[1] - T[0])
        for i in range(N):
            W[i] = sq * Z[0, i]
    # ``kind``: 0 = initial sort, 1 = sub-step, 2 = jump
    kind = 0
    while True:
        # ---- keep ``order`` sorted by (X, prio); warm-started insertion sort
        for r in range(N):
            prev[r] = order[r]
        for r in range(1, N):
            p = order[r]
            x = X[p]
            q = prio[p]
            j = r
            while j > 0:
                o = order[j - 1]
                if X[o] > x or (X[o] == x and prio[o] > q):
                    order[j] = o
                    j -= 1
                else:
                    break
            order[j] = p
        for r in range(N):
            rank_of[order[r]] = r

        if kind == 1:
            for r in range(N - 1):
                ell = (X[order[r + 1]] - X[order[r]]) - (X[prev[r + 1]] - X[prev[r]])
                if ell > 0.0:
                    pair_lt[r] += ell
            if log_on:
                log_t[k] = t
                log_h[k] = h
                for r in range(N):
                    log_dB[k, r] = dB_out[r]
                    log_order[k, r] = prev[r]
                    log_Y[k, r] = X[order[r]]
            k += 1
        elif kind == 2 and log_on:
            for r in range(N):
                jl_Y[jp - 1, r] = X[order[r]]

        if kind != 0 and M > 0 and n_active < N:
            thr = np.inf
            seen = 0
            for r in range(N):
                if active[order[r]]:
                    seen += 1
                    if seen == M:
                        thr = X[order[r]]
                        break
            for p in range(N):
                if not active[p] and X[p] <= thr:
                    active[p] = True
                    act_time[p] = t
                    act_cause[p] = CAUSE_JUMP if kind == 2 else CAUSE_DIFFUSION
                    act_level[p] = thr
                    act_pos[p] = X[p]
                    n_active += 1

        if kind == 0 and rec[0]:
            outT[g] = T[0]
            outX[g, :] = X
            outR[g, :] = R
            g += 1

        # ---- end of a base step (after any jump at the step end): record,
        # load the next increment
        if s < S and t >= T[s + 1] and not (jp < J and jt[jp] <= T[s + 1]):
            if rec[s + 1]:
                outT[g] = T[s + 1]
                outX[g, :] = X
                outR[g, :] = R
                g += 1
            s += 1
            if s < S:
                sq = math.sqrt(T[s + 1] - T[s])
                for i in range(N):
                    W[i] = sq * Z[s, i]
        if s >= S:
            break
        t1 = T[s + 1]

        # ---- next event
        if jp < J and jt[jp] <= t1 and jt[jp] <= t:
            # jump at the current time
            p = order[jw[jp]] if rank_noise else jw[jp]
            size = abs(js[jp]) if abs_jumps else js[jp]
            xn = X[p] + size
            if regulated and xn < b:
                R[p] += b - xn
                xn = b
            if log_on:
                jl_k[jp] = k
                jl_p[jp] = p
                jl_r[jp] = rank_of[p]
                jl_s[jp] = size
            X[p] = xn
            jp += 1
            kind = 2
            continue

        # continuous sub-step up to the next jump time or the step end
        L = t1 - t
        split = jp < J and jt[jp] <= t1
        if split:
            h = jt[jp] - t
            c = math.sqrt(h * (L - h) / L)
            for i in range(N):
                wsub = (h / L) * W[i] + c * BZ[jp, i]
                W[i] -= wsub
                dB_out[i] = wsub
        else:
            h = L
            for i in range(N):
                dB_out[i] = W[i]
        if h <= 0.0:
            t = t1
            kind = 3
            continue
        act_rank = 0
        for r in range(N):
            p = order[r]
            if M > 0 and not active[p]:
                kk = M - 1
            elif M > 0:
                kk = act_rank
                act_rank += 1
            else:
                kk = r
            w = r if rank_noise else p
            d = delta[kk] * h + sigma[kk] * dB_out[w]
            if regulated:
                z = X[p] - b
                if bridge:
                    sg = sigma[kk]
                    u = BU[jp, w] if split else U[s, w]
                    m = 0.5 * (d - math.sqrt(d * d - 2.0 * sg * sg * h * math.log(u)))
                    zn = max(z + d, d - m)
                    push = zn - (z + d)
                    X[p] = b + zn
                else:
                    xn = X[p] + d
                    push = 0.0
                    if xn < b:
                        push = b - xn
                        xn = b
                    X[p] = xn
                R[p] += push
                barrier_lt[p] += push
            else:
                X[p] = X[p] + d
        t = jt[jp] if split else t1
        kind = 1
    return k, jp
