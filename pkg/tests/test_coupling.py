import numpy as np
import pytest

from levyrank.coupling import (dominators_for, extract_ranked_noise, simulate_dominator_gap,
                               simulate_H, simulate_rank_coupled_pair, verify_gap_domination)
from levyrank.errors import InvalidArgument
from levyrank.finite_system import SimConfig, SystemParams, simulate
from levyrank.infinite_system import InfiniteInitial, simulate_infinite_regulated
from levyrank.levy import JumpLaw, NoiseStream

LAW = JumpLaw.symmetric_two_point(0.1, 0.5)


def det(deltas, **kw):
    with pytest.warns(UserWarning):
        return SystemParams(deltas, np.zeros(len(deltas)), deterministic_test=True, **kw)


def test_extract_requires_log():
    tr = simulate(SystemParams([0.0], [1.0]), SimConfig(horizon=1, dt=0.1), [0.0])
    with pytest.raises(InvalidArgument):
        extract_ranked_noise(tr)


def test_ranked_noise_single_particle():
    tr = simulate(SystemParams([0.0], [1.0]), SimConfig(horizon=1, dt=0.1), [0.0], LAW,
                  record_noise=True)
    rn = extract_ranked_noise(tr)
    assert np.array_equal(rn.beta, tr.noise_log.dB)


def test_ranked_noise_without_swaps():
    p = det([0.0, 0.0])
    tr = simulate(p, SimConfig(horizon=1, dt=0.1), [0.0, 5.0], record_noise=True)
    rn = extract_ranked_noise(tr)
    assert np.array_equal(rn.beta, tr.noise_log.dB)
    assert np.all(tr.noise_log.dB != 0)


def test_lambda_follows_pre_jump_rank():
    p = det([0.0, 0.0])
    law = JumpLaw.symmetric_two_point(3.0, 0.3)
    cfg = SimConfig(horizon=5, dt=0.1)
    found = 0
    for r in range(40):
        tr = simulate(p, cfg, [0.0, 1.0], law, replica=r, record_noise=True)
        log = tr.noise_log
        if log.jump_size.size != 1:
            continue
        rn = extract_ranked_noise(tr)
        # particle 0 starts lowest and, with sigma = 0, ranks only change at the jump
        pre_rank = int(log.jump_particle[0] != 0)
        assert rn.jump_rank[0] == pre_rank
        assert rn.lam[0, pre_rank] == log.jump_size[0]
        assert rn.lam[0, 1 - pre_rank] == 0
        found += 1
    assert found >= 3


def test_dominator_linear_decay():
    p = det([1.0, 0.0])
    tr = simulate(p, SimConfig(horizon=2, dt=1e-2), [0.0, 1.0], record_noise=True)
    d = simulate_dominator_gap(1, 1.0, p, extract_ranked_noise(tr))
    before = d.times < 1.0 - 2e-2
    np.testing.assert_allclose(d.values[before], 1.0 - d.times[before], atol=1e-12)
    # below one step's spread the discrete dominator stays within O(dt) of 0
    assert np.all(d.values[d.times > 1.0] <= 2e-2 + 1e-12)
    assert np.all(np.diff(d.correction) >= 0)


def test_dominator_abs_jump_and_zero():
    p = det([0.0, 0.0])
    law = JumpLaw.symmetric_two_point(2.0, 1.0)
    tr = simulate(p, SimConfig(horizon=3, dt=0.1), [0.0, 1.0], law, replica=1,
                  record_noise=True)
    rn = extract_ranked_noise(tr)
    assert rn.jump_size.size > 0
    d = simulate_dominator_gap(1, 0.0, p, rn)
    assert d.values[-1] == pytest.approx(np.abs(rn.jump_size).sum(), abs=1e-12)
    d0 = simulate_dominator_gap(1, 0.0, p, extract_ranked_noise(
        simulate(p, SimConfig(horizon=1, dt=0.1), [0.0, 0.0], record_noise=True)))
    assert np.all(d0.values == 0)


def test_dominator_rank_errors():
    p = SystemParams([0.0, 0.0], [1.0, 1.0])
    rn = extract_ranked_noise(simulate(p, SimConfig(horizon=1, dt=0.1), [0.0, 1.0],
                                       record_noise=True))
    for i in (0, 2):
        with pytest.raises(InvalidArgument):
            simulate_dominator_gap(i, 1.0, p, rn)


def test_gap_domination_zero_noise():
    p = det([0.0, 0.0, 0.0])
    tr = simulate(p, SimConfig(horizon=1, dt=0.1), [0.0, 1.0, 3.0], record_noise=True)
    assert verify_gap_domination(tr) <= 0


def test_gap_domination_random_paths():
    p = SystemParams([0.5, 0.0, -0.5], [1, 1, 1])
    cfg = SimConfig(horizon=5, dt=1e-2, master_seed=7)
    worst = max(verify_gap_domination(simulate(p, cfg, [0, 1, 2], LAW, replica=r,
                                               record_noise=True)) for r in range(20))
    assert worst <= 1e-9


def test_gap_domination_single_pair_with_jump():
    p = SystemParams([0.5, -0.5], [1, 1])
    law = JumpLaw.symmetric_two_point(1.0, 0.4)
    cfg = SimConfig(horizon=3, dt=1e-2)
    for r in range(20):
        tr = simulate(p, cfg, [0, 1], law, replica=r, record_noise=True)
        if tr.noise_log.jump_size.size == 1:
            assert verify_gap_domination(tr) <= 1e-9
            break
    else:
        pytest.fail("no single-jump path found")


def test_dominators_for_larger_starts():
    p = SystemParams([0.5, 0.0, -0.5], [1, 1, 1])
    tr = simulate(p, SimConfig(horizon=2, dt=1e-2), [0, 1, 2], LAW, record_noise=True)
    ds = dominators_for(tr, starts=[3.0, 3.0])
    assert verify_gap_domination(tr, ds) <= 1e-9


def _regulated_cfg(h=5.0, dt=1e-2, **kw):
    return SimConfig(horizon=h, dt=dt, mode="regulated", **kw)


def test_H_jump_free_equality():
    p = SystemParams.constant(4, -1.0, 1.0, barrier=0.0)
    ini = InfiniteInitial([], 1.0, 0.0)
    cfg = _regulated_cfg()
    run = simulate_infinite_regulated(ini, 4, p, cfg)
    for i, x0 in enumerate(ini.positions(4)):
        H = simulate_H(x0, p, cfg, (run.stream_master, i))
        assert np.array_equal(H.values, run.positions[:, i])


def test_H_negative_jump_strict():
    p = SystemParams.constant(1, -1.0, 1.0, barrier=0.0)
    law = JumpLaw.symmetric_two_point(1.0, 0.3)
    cfg = _regulated_cfg(h=4.0)
    for r in range(50):
        run = simulate_infinite_regulated([3.0], 1, p, cfg, law, replica=r)
        sch = NoiseStream(run.stream_master, 0, law, cfg.horizon).jump_schedule
        if len(sch) == 1 and sch.sizes[0] < 0:
            H = simulate_H(3.0, p, cfg, (run.stream_master, 0), law)
            after = run.times >= sch.times[0]
            gap = H.values - run.positions[:, 0]
            assert np.all(gap[~after] == 0)
            # H moved up by |s| where X moved down by s, so they separate, then
            # can only merge again at the barrier
            assert gap[after][0] > 0 and np.all(gap[after] >= 0)
            assert np.all(np.diff(gap[after]) <= 1e-12)
            return
    pytest.fail("no single negative jump found")


def test_H_deterministic_closed_form():
    b = 0.5
    p = det([-1.0], barrier=b)
    grid = np.linspace(0, 3, 31)
    cfg = _regulated_cfg(h=3.0, dt=1e-3, output_grid=grid)
    H = simulate_H(b + 1, p, cfg, (0, 0))
    np.testing.assert_allclose(H.values, b + np.maximum(1 - grid, 0), atol=1e-12)
    run = simulate_infinite_regulated([b + 1], 1, p, cfg)
    np.testing.assert_allclose(run.positions[:, 0], H.values, atol=1e-12)


def test_H_requires_constant():
    with pytest.raises(InvalidArgument):
        simulate_H(1.0, SystemParams([-1, -2], [1, 1], barrier=0.0), _regulated_cfg(), (0, 0))


def test_pair_identical_starts():
    p = SystemParams([-0.5, -1.0, -1.5], [1, 1, 1], barrier=0.0)
    pair = simulate_rank_coupled_pair(p, [0, 1, 2], [0, 1, 2], _regulated_cfg(), LAW)
    assert np.array_equal(pair.low.positions, pair.high.positions)


def test_pair_order_preserved():
    p = SystemParams([-0.5, -1.0, -1.5], [1, 1, 1], barrier=0.0)
    cfg = _regulated_cfg(master_seed=3)
    for r in range(20):
        pair = simulate_rank_coupled_pair(p, [0, 0, 0], [1, 2, 3], cfg, LAW, replica=r)
        assert pair.violations == 0


def test_pair_deterministic_merge():
    p = det([-1.0, -1.0], barrier=0.0)
    pair = simulate_rank_coupled_pair(p, [0.5, 1.0], [1.0, 2.0], _regulated_cfg(h=3.0))
    assert pair.violations == 0
    assert np.all(pair.low.positions[-1] == 0) and np.all(pair.high.positions[-1] == 0)


def test_pair_errors():
    p = SystemParams([-0.5, -1.0], [1, 1], barrier=0.0)
    with pytest.raises(InvalidArgument):
        simulate_rank_coupled_pair(p, [1, 2], [0, 3], _regulated_cfg())
    with pytest.raises(InvalidArgument):
        simulate_rank_coupled_pair(p, [0, 1], [1, 2], SimConfig(horizon=1))
