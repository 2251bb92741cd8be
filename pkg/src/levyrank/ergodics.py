"""Statistical diagnostics for convergence of the gap process.

Total variation between two samples is estimated on a shared binning built
from pooled quantiles (20 per coordinate by default). Up to three coordinates
are binned jointly; above that only marginals are binned and the largest
marginal TV is returned, which is a lower bound of the joint TV. Standard
errors come from a multinomial bootstrap of the bin counts.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy import stats

from .conditions import check_regulated, check_unregulated
from .errors import InvalidArgument
from .finite_system import SimConfig, simulate_batch
from .levy import JumpLaw
from .seeding import derive_seed, make_rng

DEFAULT_BINS = 20
N_BOOT = 200
JOINT_MAX_DIM = 3


@dataclass
class EmpiricalMeasure:
    """Sample of gap vectors, one per row."""

    samples: np.ndarray
    space: str = "W_N_minus_1"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        self.samples = s

    @property
    def sample_count(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def histogram(self, edges):
        """Bin masses on per-coordinate cut points ``edges`` (product bins)."""
        idx = _bin_index(self.samples, edges)
        counts = np.bincount(idx, minlength=_n_cells(edges))
        return counts / counts.sum()


@dataclass
class TVEstimate:
    value: float
    kind: str
    se: float = float("nan")

    def __float__(self):
        return float(self.value)


@dataclass
class ConvergenceReport:
    times: np.ndarray
    tv: np.ndarray
    tv_se: np.ndarray
    tv_kind: str
    ks: np.ndarray
    replicas: tuple
    nonincreasing: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"times": np.asarray(self.times).tolist(), "tv": np.asarray(self.tv).tolist(),
                "tv_se": np.asarray(self.tv_se).tolist(), "tv_kind": self.tv_kind,
                "ks": np.asarray(self.ks).tolist(), "replicas": list(self.replicas),
                "nonincreasing": self.nonincreasing, "notes": list(self.notes)}


def _as_measure(m):
    return m if isinstance(m, EmpiricalMeasure) else EmpiricalMeasure(m)


def pooled_edges(a, b, bins=DEFAULT_BINS):
    """Per-coordinate cut points at the interior quantiles of the pooled sample."""
    pooled = np.concatenate([a.samples, b.samples])
    levels = np.arange(1, bins) / bins
    return [np.unique(np.quantile(pooled[:, c], levels)) for c in range(pooled.shape[1])]


def _n_cells(edges):
    return int(np.prod([e.size + 1 for e in edges]))


def _bin_index(x, edges):
    idx = np.zeros(x.shape[0], dtype=np.int64)
    for c, e in enumerate(edges):
        idx = idx * (e.size + 1) + np.searchsorted(e, x[:, c], side="right")
    return idx


def _counts(m, edges):
    return np.bincount(_bin_index(m.samples, edges), minlength=_n_cells(edges))


def _tv_counts(ca, cb):
    return 0.5 * np.abs(ca / ca.sum() - cb / cb.sum()).sum(axis=-1)


def _boot_tv(ca, cb, n_boot, rng):
    na, nb = int(ca.sum()), int(cb.sum())
    ra = rng.multinomial(na, ca / na, size=n_boot)
    rb = rng.multinomial(nb, cb / nb, size=n_boot)
    return 0.5 * np.abs(ra / na - rb / nb).sum(axis=1)


def binned_tv(a, b, bins=DEFAULT_BINS, *, n_boot=0, seed=0):
    """Binned total-variation estimate between two empirical measures.

    ``bins`` is either a count per coordinate (pooled-quantile cut points) or
    a list of explicit cut-point arrays. ``n_boot > 0`` adds a bootstrap
    standard error.
    """
    a, b = _as_measure(a), _as_measure(b)
    if a.sample_count == 0 or b.sample_count == 0:
        raise InvalidArgument("empirical measures must be non-empty")
    if a.dim != b.dim:
        raise InvalidArgument(f"dimension mismatch: {a.dim} vs {b.dim}")
    edges = (pooled_edges(a, b, bins) if np.isscalar(bins)
             else [np.asarray(e, dtype=float) for e in bins])
    rng = make_rng(seed, "bootstrap", 0)
    if a.dim <= JOINT_MAX_DIM:
        ca, cb = _counts(a, edges), _counts(b, edges)
        value = float(_tv_counts(ca, cb))
        se = float(np.std(_boot_tv(ca, cb, n_boot, rng), ddof=1)) if n_boot > 1 else np.nan
        return TVEstimate(value, "binned", se)
    vals, boots = [], []
    for c in range(a.dim):
        ca, cb = _counts(EmpiricalMeasure(a.samples[:, c]), [edges[c]]), \
            _counts(EmpiricalMeasure(b.samples[:, c]), [edges[c]])
        vals.append(float(_tv_counts(ca, cb)))
        if n_boot > 1:
            boots.append(_boot_tv(ca, cb, n_boot, rng))
    se = float(np.std(np.max(boots, axis=0), ddof=1)) if boots else np.nan
    return TVEstimate(max(vals), "marginal lower bound", se)


def ks_marginal(a, coordinate, reference):
    """Kolmogorov-Smirnov distance of one coordinate of ``a`` to a cdf
    (callable) or to another sample (measure or array)."""
    a = _as_measure(a)
    if not 0 <= coordinate < a.dim:
        raise InvalidArgument(f"coordinate must be in 0..{a.dim - 1}")
    x = a.samples[:, coordinate]
    if callable(reference):
        return float(stats.ks_1samp(x, reference).statistic)
    ref = reference.samples[:, coordinate] if isinstance(reference, EmpiricalMeasure) \
        else np.asarray(reference, dtype=float)
    return float(stats.ks_2samp(x, ref).statistic)


def initial_positions(params, gap, mode):
    """Ordered start with the given gap vector (lowest particle at 0 or at b)."""
    z = np.asarray(getattr(gap, "values", gap), dtype=float)
    if mode == "regulated":
        if z.size != params.N:
            raise InvalidArgument(f"regulated gap vector needs {params.N} coordinates")
        return params.barrier + z
    if z.size != params.N - 1:
        raise InvalidArgument(f"gap vector needs {params.N - 1} coordinates")
    return np.concatenate([[0.0], z])


def sample_gaps_over(params, gap, times, replicas, master_seed, law=None, *, dt=1e-3,
                     mode=None, reflection="bridge"):
    """Gap samples at several times from one set of replicas: ``{t: measure}``."""
    if replicas < 1:
        raise InvalidArgument("replicas must be >= 1")
    mode = mode or ("regulated" if params.barrier is not None else "unregulated")
    x0 = initial_positions(params, gap, mode)
    times = np.asarray(times, dtype=float)
    space = "W_N" if mode == "regulated" else "W_N_minus_1"
    z0 = (x0 - params.barrier) if mode == "regulated" else x0[1:] - x0[0]
    out = {}
    positive = np.unique(times[times > 0])
    if positive.size:
        cfg = SimConfig(horizon=float(positive[-1]), dt=min(dt, float(positive[-1])),
                        output_grid=positive, master_seed=master_seed, mode=mode,
                        reflection=reflection)
        batch = simulate_batch(params, cfg, x0, law, replicas)
        g = batch.gaps
        for k, t in enumerate(batch.times):
            out[float(t)] = EmpiricalMeasure(g[:, k, :], space)
    for t in times:
        if t <= 0:
            out[float(t)] = EmpiricalMeasure(np.tile(z0, (replicas, 1)), space)
    return {float(t): out[float(t)] for t in times}


def sample_gaps_at(params, gap, t, replicas, master_seed, law=None, **kw):
    return sample_gaps_over(params, gap, [t], replicas, master_seed, law, **kw)[float(t)]


def _regime_notes(params, law, mode):
    law = law if law is not None else JumpLaw.none()
    if params.N < 2 and mode != "regulated":
        return []
    rep = check_regulated(params, law) if mode == "regulated" else check_unregulated(params, law)
    if not rep.satisfied:
        warnings.warn("parameters are outside the proven regime", stacklevel=3)
    return rep.notes


def nonincreasing_within(tv, se, k=2.0):
    """``tv[j+1] - tv[j] <= k * sqrt(se[j]^2 + se[j+1]^2)`` for all ``j``."""
    tv, se = np.asarray(tv), np.asarray(se)
    return bool(np.all(np.diff(tv) <= k * np.sqrt(se[:-1] ** 2 + se[1:] ** 2)))


def _ks_all(a, b):
    return [ks_marginal(a, c, b) for c in range(a.dim)]


def two_start_convergence(params, init_a, init_b, times, replicas, master_seed=0,
                          law=None, *, dt=1e-3, bins=DEFAULT_BINS, n_boot=N_BOOT,
                          mode=None):
    """TV between the gap laws started from two gap vectors, per grid time.

    The two starts use independent seed families, so identical starts give
    TV at the Monte Carlo noise level.
    """
    mode = mode or ("regulated" if params.barrier is not None else "unregulated")
    notes = _regime_notes(params, law, mode)
    times = np.asarray(times, dtype=float)
    sa = sample_gaps_over(params, init_a, times, replicas,
                          derive_seed(master_seed, "start", 0), law, dt=dt, mode=mode)
    sb = sample_gaps_over(params, init_b, times, replicas,
                          derive_seed(master_seed, "start", 1), law, dt=dt, mode=mode)
    tv, se, ks, kind = [], [], [], "binned"
    for k, t in enumerate(times):
        est = binned_tv(sa[float(t)], sb[float(t)], bins, n_boot=n_boot,
                        seed=derive_seed(master_seed, "bootstrap", k))
        tv.append(est.value)
        se.append(est.se)
        kind = est.kind
        ks.append(_ks_all(sa[float(t)], sb[float(t)]))
    return ConvergenceReport(times, np.array(tv), np.array(se), kind, np.array(ks),
                             (replicas, replicas), nonincreasing_within(tv, se), notes)


def skeleton_stationarity(params, init, epsilon=1.0, n_lo=10, n_hi=20, replicas=1000,
                          master_seed=0, law=None, *, dt=1e-3, bins=DEFAULT_BINS,
                          n_boot=N_BOOT, mode=None):
    """Compare the skeleton chain at steps ``n_lo`` and ``n_hi`` (same paths)."""
    if not epsilon > 0:
        raise InvalidArgument("epsilon must be > 0")
    mode = mode or ("regulated" if params.barrier is not None else "unregulated")
    notes = _regime_notes(params, law, mode)
    t_lo, t_hi = n_lo * epsilon, n_hi * epsilon
    s = sample_gaps_over(params, init, [t_lo, t_hi], replicas, master_seed, law,
                         dt=dt, mode=mode)
    a, b = s[float(t_lo)], s[float(t_hi)]
    est = binned_tv(a, b, bins, n_boot=n_boot, seed=derive_seed(master_seed, "bootstrap", 0))
    return ConvergenceReport(np.array([t_lo, t_hi]), np.array([est.value]),
                             np.array([est.se]), est.kind, np.array([_ks_all(a, b)]),
                             (replicas, replicas), True, notes)


def time_average(trajectory, burn_in):
    """Empirical measure of the recorded gap vectors at times ``> burn_in``."""
    horizon = float(trajectory.times[-1])
    if not burn_in < horizon:
        raise InvalidArgument(f"burn_in must be < horizon ({horizon})")
    keep = trajectory.times > burn_in
    space = "W_N" if trajectory.config.mode == "regulated" else "W_N_minus_1"
    return EmpiricalMeasure(trajectory.gaps[keep], space)
