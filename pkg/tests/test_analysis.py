import numpy as np
import pytest

from atfrac.analysis import (
    crack_time_from_states,
    eps_sweep,
    extract_crack,
    gamma_liminf_check,
    select_levels,
    sharp_oracle_1d,
    sharp_oracle_strip,
    superlevel_perimeter,
    write_convergence_csv,
)
from atfrac.energy import ATParams
from atfrac.evolution import BoundarySchedule
from atfrac.grid import Field, build_grid, constant_field


def _bar(n=100):
    return build_grid(1, 1.0, n, "ends")


def _crack_profile(grid, eps, site=0.5):
    x = grid.coordinates()[:, 0]
    return Field(grid, 1.0 - np.exp(-np.abs(x - site) / eps))


def _ramp_schedule(rate=1.0, t_end=1.0, n=20):
    g = _bar(n)
    profile = Field(g, g.coordinates()[:, 0])
    return BoundarySchedule.linear_ramp(profile, rate=rate, t_end=t_end)


def test_superlevel_perimeter_flat_and_well():
    g = _bar(200)
    assert superlevel_perimeter(constant_field(g, 1.0), 0.5) == 0.0
    v = _crack_profile(g, 0.02)
    # A single well: the superlevel set is two intervals, two crossings.
    assert superlevel_perimeter(v, 0.25) == 2.0


def test_select_levels_flat_field():
    g = _bar(50)
    levels = select_levels(constant_field(g, 1.0), c1=1.0)
    assert len(levels) == 5
    for sel in levels:
        assert sel.perimeter == 0.0
        assert sel.certified
        assert 2.0 ** -(sel.j + 1) <= sel.level <= 2.0 ** -sel.j


def test_select_levels_single_well_certificates():
    g = _bar(250)
    v = _crack_profile(g, 0.02)
    levels = select_levels(v, c1=1.2)
    for sel in levels:
        assert sel.perimeter == 2.0
        assert sel.perimeter * 2.0 ** -(sel.j + 1) <= 1.2 + 1e-12
        assert sel.certified
    with pytest.raises(ValueError):
        select_levels(v, c1=0.0)


def test_extract_crack_empty_and_single():
    g = _bar(250)
    eps = 0.02
    empty = extract_crack(constant_field(g, 1.0), eps)
    assert not empty.indicator.any()
    assert empty.mm_measure == 0.0
    assert empty.components == 0

    est = extract_crack(_crack_profile(g, eps), eps)
    assert est.components == 1
    assert 0.85 <= est.mm_measure <= 1.15
    with pytest.raises(ValueError):
        extract_crack(constant_field(g, 1.0), eps, threshold=0.0)


def test_extract_crack_2d_straight_line():
    eps = 0.05
    n = round(1 / (eps / 3))
    g = build_grid(2, (1.0, 1.0), (n, n), "top_bottom")
    y = g.coordinates()[:, 1]
    v = Field(g, 1.0 - np.exp(-np.abs(y - 0.5) / eps))
    est = extract_crack(v, eps)
    assert est.components == 1
    assert 0.8 <= est.mm_measure <= 1.3


def test_sharp_oracle_1d_examples():
    sched = _ramp_schedule(rate=1.0, t_end=1.5)
    times = np.linspace(0, 1.5, 31)
    path = sharp_oracle_1d(sched, times=times)
    assert path.crack_time == pytest.approx(1.0)
    np.testing.assert_allclose(path.energies, np.minimum(times**2, 1.0), atol=1e-12)

    half = sharp_oracle_1d(_ramp_schedule(rate=0.5, t_end=1.0))
    assert half.crack_time is None
    assert half.energies[-1] == pytest.approx(0.25)

    zero = sharp_oracle_1d(_ramp_schedule(rate=0.0, t_end=1.0))
    assert zero.crack_time is None
    np.testing.assert_array_equal(zero.energies, 0.0)


def test_sharp_oracle_rejects_nonmonotone():
    g = _bar(20)
    profile = Field(g, g.coordinates()[:, 0])
    sched = BoundarySchedule.from_table(
        profile, [(0.0, 0.0), (0.5, 1.0), (1.0, 0.5)])
    with pytest.raises(ValueError):
        sharp_oracle_1d(sched)


def test_sharp_oracle_strip_examples():
    path = sharp_oracle_strip(1.0, _ramp_schedule(rate=1.0, t_end=1.0),
                              times=np.linspace(0, 1, 21))
    assert path.crack_time == pytest.approx(0.5)
    # Continuity at the crossover for w = 2: 4 t^2 w = w at t = 0.5.
    wide = sharp_oracle_strip(2.0, _ramp_schedule(rate=1.0, t_end=1.0),
                              times=np.array([0.5]))
    assert wide.energies[0] == pytest.approx(2.0)
    assert wide.crack_time == pytest.approx(0.5)


def test_strip_reduces_to_1d_oracle():
    # Strip with shear +/- a equals w times the bar oracle at load 2a.
    rng = np.random.default_rng(9)
    for _ in range(5):
        w = float(rng.uniform(0.3, 3.0))
        rate = float(rng.uniform(0.2, 2.0))
        times = np.linspace(0, 1.4, 29)
        strip = sharp_oracle_strip(w, _ramp_schedule(rate=rate, t_end=1.4),
                                   times=times)
        bar = sharp_oracle_1d(_ramp_schedule(rate=2 * rate, t_end=1.4),
                              times=times)
        np.testing.assert_allclose(strip.energies, w * bar.energies, atol=1e-12)
        if strip.crack_time is None:
            assert bar.crack_time is None
        else:
            assert strip.crack_time == pytest.approx(bar.crack_time)


def test_gamma_liminf_check():
    g = _bar(100)
    params = ATParams(eps=0.05)
    t = 0.4
    u = Field(g, t * g.coordinates()[:, 0])
    v = constant_field(g, 1.0)
    rep = gamma_liminf_check(u, v, params, t**2)
    assert rep.passed
    assert rep.f_eps >= rep.oracle  # eta makes it strictly larger


def test_crack_time_from_states_none():
    from atfrac.evolution import run

    g = _bar(40)
    params = ATParams(eps=0.05, delta=0.25)
    profile = Field(g, g.coordinates()[:, 0])
    sched = BoundarySchedule.linear_ramp(profile, rate=0.3, t_end=1.0)
    states = run(g, sched, params)
    assert crack_time_from_states(states) is None


def test_eps_sweep_validation_and_single_row(tmp_path):
    from atfrac.config import RunConfig

    cfg = RunConfig(
        dim=1, extents=(1.0,), counts=(10,), dirichlet="ends",
        eps=0.1, eta=1e-3, delta=0.05, schedule_kind="ramp",
        profile="linear_x", rate=0.4, t_end=0.5,
    )
    with pytest.raises(ValueError):
        eps_sweep(cfg, [])
    rows = eps_sweep(cfg, [0.1])
    assert len(rows) == 1
    assert rows[0].crack_time is None
    assert rows[0].sup_gap >= 0.0
    path = str(tmp_path / "convergence.csv")
    write_convergence_csv(rows, path)
    with open(path) as fh:
        header = fh.readline().strip()
    assert header == "eps,h,delta,crack_time,surface_final,elliptic_final,sup_gap"
