"""Gap vectors, market weights and post-jump gap maps.

The post-jump maps are given in two forms. The subset form takes, for gap
``i``, the minimum over all index subsets of the right size of the maximum of
the shifted coordinates; the oracle form rebuilds positions, sorts and
re-references them. The two agree exactly because the ``k``-th order
statistic of a finite set is the min-max over its ``k``-element subsets.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import InvalidArgument

SUBSET_MAX_N = 12
SPACES = ("W_N_minus_1", "W_N")


@dataclass(frozen=True)
class GapVector:
    values: np.ndarray
    space: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if self.space not in SPACES:
            raise InvalidArgument(f"space must be one of {SPACES}")
        if v.size and (v[0] < 0 or np.any(np.diff(v) < 0)):
            raise InvalidArgument("gap vector must be nonnegative and nondecreasing")

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class MarketWeights:
    weights: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)


def _require_sorted(y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise InvalidArgument("expected a non-empty vector")
    if np.any(np.diff(y) < 0):
        raise InvalidArgument("ordered positions must be nondecreasing")
    return y


def gaps_unregulated(ordered_positions):
    """``(Y_2 - Y_1, ..., Y_N - Y_1)``."""
    y = _require_sorted(ordered_positions)
    return GapVector(y[1:] - y[0], "W_N_minus_1")


def gaps_regulated(ordered_positions, b):
    """``(Y_1 - b, ..., Y_N - b)``."""
    y = _require_sorted(ordered_positions)
    if y[0] < b:
        raise InvalidArgument(f"min position {y[0]} is below the barrier {b}")
    return GapVector(y - b, "W_N")


def market_weights(positions):
    """Rank-indexed exp-position shares, computed after a shift by the max."""
    x = np.asarray(positions, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("positions must be finite")
    y = np.sort(x)
    e = np.exp(y - y[-1])
    return MarketWeights(e / e.sum())


@lru_cache(maxsize=None)
def _subsets(n, k):
    return np.array(list(combinations(range(n), k)), dtype=np.int64)


def _minmax_order_stats(w, ks):
    """Order statistics of the rows of ``w`` by literal subset min-max.

    ``w`` has shape ``(B, n)``; returns ``(B, len(ks))`` with column ``c``
    holding the ``ks[c]``-th smallest entry (1-based).
    """
    n = w.shape[1]
    out = np.empty((w.shape[0], len(ks)))
    for c, k in enumerate(ks):
        sub = _subsets(n, k)
        out[:, c] = w[:, sub].max(axis=2).min(axis=1)
    return out


def _prepare(z, eta, dz):
    z = np.asarray(getattr(z, "values", z), dtype=float)
    eta = np.asarray(eta, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    eta = np.atleast_2d(eta)
    if z.shape[1] + dz != eta.shape[1] or z.shape[0] != eta.shape[0]:
        raise InvalidArgument(f"dimension mismatch: z has {z.shape[1]} coordinates, "
                              f"eta has {eta.shape[1]}")
    return z, eta, single


def _wrap(out, single, space):
    return GapVector(out[0], space) if single else out


def jump_map_F(z, eta):
    """Unregulated post-jump gaps; ``eta[j]`` is the jump of rank ``j + 1``.

    Accepts a single pair or batches shaped ``(B, N-1)``/``(B, N)``.
    """
    z, eta, single = _prepare(z, eta, 1)
    n = eta.shape[1]
    w = np.concatenate([np.zeros((z.shape[0], 1)), z], axis=1) + eta
    if n > SUBSET_MAX_N:
        return jump_map_oracle(z[0] if single else z, eta[0] if single else eta,
                               "unregulated")
    stats = _minmax_order_stats(w, range(2, n + 1))
    low = _minmax_order_stats(w, [1])
    return _wrap(stats - low, single, "W_N_minus_1")


def jump_map_F_regulated(z, eta):
    """Regulated post-jump gaps to the barrier."""
    z, eta, single = _prepare(z, eta, 0)
    n = eta.shape[1]
    if n > SUBSET_MAX_N:
        return jump_map_oracle(z[0] if single else z, eta[0] if single else eta,
                               "regulated")
    w = np.maximum(z + eta, 0.0)
    return _wrap(_minmax_order_stats(w, range(1, n + 1)), single, "W_N")


def jump_map_oracle(z, eta, mode="unregulated"):
    """Sort-based post-jump gaps: shift ranks, (clamp,) sort, re-reference."""
    if mode == "unregulated":
        z, eta, single = _prepare(z, eta, 1)
        pos = np.concatenate([np.zeros((z.shape[0], 1)), z], axis=1) + eta
        pos = np.sort(pos, axis=1, kind="stable")
        return _wrap(pos[:, 1:] - pos[:, :1], single, "W_N_minus_1")
    if mode == "regulated":
        z, eta, single = _prepare(z, eta, 0)
        return _wrap(np.sort(np.maximum(z + eta, 0.0), axis=1, kind="stable"),
                     single, "W_N")
    raise InvalidArgument(f"mode must be 'unregulated' or 'regulated', got {mode!r}")
