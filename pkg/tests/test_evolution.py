import numpy as np
import pytest

from atfrac.energy import ATParams, total_energy
from atfrac.evolution import (
    ENERGY_CSV_HEADER,
    BoundarySchedule,
    Strategy,
    advance,
    competitor_step,
    init_step,
    initial_ceiling,
    read_energy_csv,
    run,
    write_energy_csv,
)
from atfrac.grid import Field, build_grid, constant_field


def _bar(n=50):
    return build_grid(1, 1.0, n, "ends")


def _ramp(grid, rate=1.0, t_end=1.0):
    profile = Field(grid, grid.coordinates()[:, 0])
    return BoundarySchedule.linear_ramp(profile, rate=rate, t_end=t_end)


def test_schedule_validation():
    g = _bar(10)
    profile = Field(g, g.coordinates()[:, 0])
    with pytest.raises(ValueError):
        BoundarySchedule(profile, np.array([0.0, 1.0]), np.array([0.5, 1.0]))
    with pytest.raises(ValueError):
        BoundarySchedule(profile, np.array([0.0, 0.0]), np.array([0.0, 1.0]))
    s = BoundarySchedule.from_table(profile, [(0.5, 0.2), (0.0, 0.0), (1.0, 0.2)])
    assert s.amplitude(0.25) == pytest.approx(0.1)
    assert s.amplitude(0.75) == pytest.approx(0.2)
    assert s.t_end == 1.0


def test_schedule_g_scales_profile():
    g = _bar(10)
    s = _ramp(g, rate=2.0, t_end=1.0)
    np.testing.assert_allclose(s.g(0.5).values, g.coordinates()[:, 0], atol=1e-14)


def test_initial_ceiling_notch():
    g = _bar(20)
    strat = Strategy(crack_site=0.5, notch_value=0.3)
    upper = initial_ceiling(g, strat)
    x = g.coordinates()[:, 0]
    near = np.abs(x - 0.5) <= 0.51 * g.spacing[0]
    assert np.all(upper.values[near] == 0.3)
    assert np.all(upper.values[~near] == 1.0)
    with pytest.raises(ValueError):
        initial_ceiling(g, Strategy(notch_value=0.3))
    with pytest.raises(ValueError):
        initial_ceiling(g, Strategy(crack_site=0.0, notch_value=0.3))


def test_init_step_zero_amplitude():
    g = _bar(30)
    params = ATParams(eps=0.05)
    state = init_step(g, _ramp(g), params)
    assert state.index == 0 and state.t == 0.0
    assert np.abs(state.u.values).max() <= 1e-12
    np.testing.assert_allclose(state.v.values, 1.0, atol=1e-10)
    assert state.log[0].total == pytest.approx(0.0, abs=1e-12)


def test_init_step_bounded_by_admissible_pair():
    g = _bar(30)
    params = ATParams(eps=0.05)
    sched = _ramp(g)
    state = init_step(g, sched, params)
    bench = total_energy(sched.g(0.0), constant_field(g, 1.0), params)
    assert state.log[0].total <= bench + 1e-12


def test_advance_zero_increment_is_fixed_point():
    g = _bar(40)
    params = ATParams(eps=0.05, delta=0.1)
    profile = Field(g, g.coordinates()[:, 0])
    sched = BoundarySchedule.from_table(
        profile, [(0.0, 0.0), (0.1, 0.3), (1.0, 0.3)])
    s1 = init_step(g, sched, params)
    s2 = advance(s1, sched, params)          # load turns on
    s3 = advance(s2, sched, params)          # plateau: dg = 0
    assert s3.log[-1].total == pytest.approx(s2.log[-1].total, abs=1e-8)
    assert np.abs(s3.u.values - s2.u.values).max() <= 1e-6
    assert s3.log[-1].work_increment == pytest.approx(0.0, abs=1e-12)


def test_advance_homogeneous_branch():
    g = _bar(100)
    eps = 0.05
    params = ATParams(eps=eps, delta=0.05)
    sched = _ramp(g)
    state = init_step(g, sched, params)
    for _ in range(6):
        state = advance(state, sched, params)
    t = state.t
    rec = state.log[-1]
    assert abs(rec.elliptic - t**2) <= 0.1 * t**2
    assert state.v.values.min() >= 1.0 - 5 * eps * t**2


def test_irreversibility_bitwise():
    g = _bar(50)
    params = ATParams(eps=0.05, delta=0.1)
    states = run(g, _ramp(g, t_end=0.8), params)
    for earlier, later in zip(states, states[1:]):
        assert np.all(later.v.values <= earlier.v.values)


def test_run_zero_schedule():
    g = _bar(30)
    params = ATParams(eps=0.05, delta=0.25)
    states = run(g, _ramp(g, rate=0.0, t_end=1.0), params)
    assert len(states) == 5
    for s in states:
        assert s.log[-1].total == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(s.v.values, 1.0, atol=1e-10)


def test_run_bounds_and_surface_monotone():
    g = _bar(100)
    params = ATParams(eps=0.05, delta=0.05)
    states = run(g, _ramp(g, rate=0.6), params)
    log = states[-1].log
    for r in log:
        assert r.total <= r.upper_bound + 1e-9
        assert not r.bound_violated
    surfaces = [r.surface for r in log]
    assert all(b >= a - 1e-8 for a, b in zip(surfaces, surfaces[1:]))


def test_competitor_rejected_at_small_load():
    g = build_grid(1, 1.0, 125, "ends")
    params = ATParams(eps=0.04, delta=0.1)
    sched = _ramp(g, t_end=0.3)
    strat = Strategy(competitor=True, crack_site=0.5)
    states = run(g, sched, params, strat)
    assert not any(r.competitor_accepted for r in states[-1].log)
    assert states[-1].v.values.min() > 0.5


def test_competitor_step_small_load_returns_state():
    g = build_grid(1, 1.0, 125, "ends")
    params = ATParams(eps=0.04, delta=0.1)
    sched = _ramp(g, t_end=0.3)
    states = run(g, sched, params)
    out = competitor_step(states[-1], sched, params, 0.5)
    assert out is states[-1]


def test_competitor_site_on_boundary_rejected():
    g = _bar(20)
    params = ATParams(eps=0.05, delta=0.1)
    sched = _ramp(g, t_end=0.2)
    states = run(g, sched, params)
    with pytest.raises(ValueError):
        competitor_step(states[-1], sched, params, 0.0)


def test_state_invariants_along_run():
    g = _bar(60)
    params = ATParams(eps=0.05, delta=0.1)
    sched = _ramp(g, rate=0.7)
    for s in run(g, sched, params):
        assert np.all(s.v.values >= 0.0) and np.all(s.v.values <= 1.0)
        assert np.all(s.v.values[g.dirichlet_mask] == 1.0)
        gt = sched.g(s.t)
        assert np.abs(s.u.values[g.dirichlet_mask]
                      - gt.values[g.dirichlet_mask]).max() <= 1e-9
        assert np.abs(s.u.values).max() <= np.abs(gt.values).max() + 1e-12


def test_energy_csv_round_trip(tmp_path):
    g = _bar(40)
    params = ATParams(eps=0.05, delta=0.2)
    states = run(g, _ramp(g, rate=0.5), params)
    path = str(tmp_path / "energy.csv")
    write_energy_csv(states, path)
    with open(path) as fh:
        assert fh.readline().strip() == ENERGY_CSV_HEADER
    records = read_energy_csv(path)
    log = states[-1].log
    assert len(records) == len(log)
    for a, b in zip(records, log):
        assert a.t == pytest.approx(b.t, abs=1e-12)
        assert a.total == pytest.approx(b.total, rel=1e-10)
        assert a.work_cumulative == pytest.approx(b.work_cumulative, rel=1e-9, abs=1e-12)
        assert a.am_sweeps == b.am_sweeps
