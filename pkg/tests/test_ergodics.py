import numpy as np
import pytest
from scipy import stats

from levyrank.ergodics import (EmpiricalMeasure, binned_tv, ks_marginal, nonincreasing_within,
                               sample_gaps_at, skeleton_stationarity, time_average,
                               two_start_convergence)
from levyrank.errors import InvalidArgument
from levyrank.finite_system import SimConfig, SystemParams, simulate
from levyrank.levy import JumpLaw

P2 = SystemParams([0.5, -0.5], [1.0, 1.0])
LAW = JumpLaw.symmetric_two_point(0.1, 0.5)


def test_binned_tv_examples():
    x = np.random.default_rng(0).normal(size=(500, 2))
    assert binned_tv(x, x).value == 0
    assert binned_tv(np.zeros(50), np.ones(50)).value == 1
    a, b = [0, 0, 1, 1], [0, 1, 1, 1]
    assert binned_tv(a, b, [[0.5]]).value == pytest.approx(0.25)
    assert binned_tv(a, b).value == pytest.approx(0.25)


def test_binned_tv_properties():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(400, 3)), rng.normal(0.3, 1, size=(300, 3))
    t1, t2 = binned_tv(a, b).value, binned_tv(b, a).value
    assert t1 == pytest.approx(t2) and 0 <= t1 <= 1
    est = binned_tv(a, b, n_boot=50, seed=2)
    assert est.kind == "binned" and est.se > 0


def test_binned_tv_high_dim_lower_bound():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(300, 5)), rng.normal(size=(300, 5))
    b[:, 3] += 2
    est = binned_tv(a, b)
    assert est.kind == "marginal lower bound"
    assert est.value == pytest.approx(binned_tv(a[:, 3], b[:, 3]).value)


def test_binned_tv_errors():
    with pytest.raises(InvalidArgument):
        binned_tv(np.empty((0, 1)), np.ones(3))
    with pytest.raises(InvalidArgument):
        binned_tv(np.ones((3, 2)), np.ones((3, 1)))


def test_histogram_mass():
    m = EmpiricalMeasure(np.random.default_rng(0).normal(size=(100, 2)))
    h = m.histogram([np.array([-1.0, 0.0, 1.0]), np.array([0.0])])
    assert abs(h.sum() - 1) <= 1e-12 and h.size == 8


def test_ks_examples():
    x = np.random.default_rng(0).exponential(0.5, 10**5)
    assert ks_marginal(x, 0, x) == 0
    assert ks_marginal(x, 0, stats.expon(scale=0.5).cdf) < 0.01
    assert ks_marginal(np.zeros(10), 0, stats.expon(scale=0.5).cdf) == 1
    with pytest.raises(InvalidArgument):
        ks_marginal(x, 1, x)


def test_sample_gaps_examples():
    m0 = sample_gaps_at(P2, [1.0], 0.0, 5, 0, LAW)
    assert np.all(m0.samples == 1.0)
    assert sample_gaps_at(P2, [1.0], 1.0, 1, 0, LAW, dt=1e-2).sample_count == 1
    a = sample_gaps_at(P2, [1.0], 1.0, 2000, 1, LAW, dt=1e-2)
    b = sample_gaps_at(P2, [1.0], 1.0, 2000, 2, LAW, dt=1e-2)
    assert stats.ks_2samp(a.samples[:, 0], b.samples[:, 0]).pvalue > 0.01
    with pytest.raises(InvalidArgument):
        sample_gaps_at(P2, [1.0], 1.0, 0, 0)


def test_two_start_examples():
    same = two_start_convergence(P2, [1.0], [1.0], [1.0, 2.0], 2000, 0, LAW, dt=1e-2,
                                 n_boot=50)
    assert np.all(same.tv < 0.1)
    far = two_start_convergence(P2, [0.0], [4.0], [0.0, 1.0, 2.0, 4.0], 2000, 0, LAW,
                                dt=1e-2, n_boot=50)
    assert far.tv[0] == 1
    assert far.nonincreasing and far.tv[-1] < far.tv[1]
    assert far.to_dict()["tv_kind"] == "binned"


def test_two_start_warns_outside_regime():
    p = SystemParams([0.0, 0.0], [1.0, 1.0])
    with pytest.warns(UserWarning, match="outside the proven regime"):
        two_start_convergence(p, [0.0], [1.0], [0.5], 50, 0, LAW, dt=0.1, n_boot=0)


def test_nonincreasing_within():
    assert nonincreasing_within([0.5, 0.52, 0.3], [0.01, 0.01, 0.01])
    assert not nonincreasing_within([0.5, 0.6], [0.01, 0.01])


def test_skeleton_examples():
    rep = skeleton_stationarity(P2, [1.0], 1.0, 3, 3, 300, 0, LAW, dt=1e-2, n_boot=20)
    assert rep.tv[0] == 0
    rep = skeleton_stationarity(P2, [8.0], 1.0, 0, 10, 300, 0, LAW, dt=1e-2, n_boot=20)
    assert rep.tv[0] > 0.9
    rep = skeleton_stationarity(P2, [1.0], 1.0, 10, 20, 2000, 0, LAW, dt=1e-2, n_boot=100)
    assert rep.tv[0] <= 2 * rep.tv_se[0] + 0.05
    with pytest.raises(InvalidArgument):
        skeleton_stationarity(P2, [1.0], 0.0)


def test_time_average():
    with pytest.warns(UserWarning):
        flat = SystemParams([0.0, 0.0], [0.0, 0.0], deterministic_test=True)
    tr = simulate(flat, SimConfig(horizon=2, dt=0.1), [0.0, 1.0])
    m = time_average(tr, 0.5)
    assert np.all(m.samples == 1.0)
    with pytest.raises(InvalidArgument):
        time_average(tr, 2.0)


def test_time_average_matches_ensemble():
    cfg = SimConfig(horizon=2000, dt=1e-2, output_grid=np.arange(0, 2000.001, 0.1),
                    master_seed=3)
    ta = time_average(simulate(P2, cfg, [0.0, 1.0]), 20.0)
    ens = sample_gaps_at(P2, [1.0], 20.0, 2000, 4, dt=1e-2)
    assert ks_marginal(ta, 0, ens) < 0.05
