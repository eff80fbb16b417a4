import os

import numpy as np
import pytest

from gne_esc.game import GameSpec
from gne_esc.harness import (
    RunConfig,
    SweepGrid,
    Trajectory,
    integrate,
    make_run_config,
    run_metrics,
    sweep,
)
from gne_esc.sets import Box


def test_integrate_exponential_decay():
    cfg = RunConfig(step=0.01, horizon=1.0, sample_stride=10)
    traj = integrate(lambda t, s: -s, np.array([1.0]), cfg)
    assert traj.status == "ok"
    assert traj.states[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-9)


def test_integrate_zero_rhs_constant():
    cfg = RunConfig(step=0.1, horizon=5.0, sample_stride=1)
    traj = integrate(lambda t, s: np.zeros_like(s), np.array([2.0, -1.0]), cfg)
    assert np.all(traj.states == [2.0, -1.0])


def test_integrate_order_four_self_convergence():
    # halving the step shrinks the terminal error about sixteenfold
    def rhs(t, s):
        return -s

    exact = np.exp(-2.0)
    errs = []
    for h in (0.2, 0.1):
        cfg = RunConfig(step=h, horizon=2.0, sample_stride=1000)
        traj = integrate(rhs, np.array([1.0]), cfg)
        errs.append(abs(traj.states[-1, 0] - exact))
    ratio = errs[0] / errs[1]
    assert 12.0 < ratio < 20.0


def test_integrate_aborts_on_non_finite():
    # finite-time blow-up of s' = s^2 overflows; the run aborts keeping
    # only finite samples
    def rhs(t, s):
        return s * s

    cfg = RunConfig(step=0.05, horizon=10.0, sample_stride=1)
    with np.errstate(over="ignore", invalid="ignore"):
        traj = integrate(rhs, np.array([1.0]), cfg)
    assert traj.status == "non_finite"
    assert np.all(np.isfinite(traj.states))


def test_integrate_guard_flags_domain_exit():
    cfg = RunConfig(step=0.1, horizon=10.0, sample_stride=1)
    traj = integrate(
        lambda t, s: np.ones_like(s),
        np.zeros(1),
        cfg,
        guard=lambda s: s[0] <= 0.5,
    )
    assert traj.status == "domain_exit"
    assert traj.times[-1] < 10.0


def test_integrate_applies_post_step_clamp():
    cfg = RunConfig(step=0.1, horizon=1.0, sample_stride=1)

    def clamp(s):
        np.clip(s, -np.inf, 0.35, out=s)

    traj = integrate(lambda t, s: np.ones_like(s), np.zeros(1), cfg, post_step=clamp)
    assert traj.states[-1, 0] == pytest.approx(0.35)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(step=-0.1, horizon=1.0)
    with pytest.raises(ValueError):
        RunConfig(step=0.1, horizon=0.01)
    with pytest.raises(ValueError):
        RunConfig(step=0.1, horizon=1.0, mode="bogus")


def _metric_game():
    box = Box(np.array([-10.0, -10.0]), np.array([10.0, 10.0]))
    return GameSpec(
        dims=(2,),
        cost=(lambda ui, um: 0.0,),
        cost_grad=(lambda ui, um: np.zeros(2),),
        local_sets=(box,),
        coupling_A=np.array([[1.0, 1.0]]),
        coupling_b=np.array([5.0]),
    )


def _traj(times, u, q=1):
    states = np.hstack([u, np.zeros((u.shape[0], q))])
    return Trajectory(times, states, {"u": slice(0, u.shape[1]), "lam": slice(u.shape[1], u.shape[1] + q)})


def test_run_metrics_exact_trajectory():
    game = _metric_game()
    times = np.linspace(0.0, 10.0, 101)
    u = np.tile([1.0, 2.0], (101, 1))
    m = run_metrics(_traj(times, u), np.array([1.0, 2.0]), 0.5, game)
    assert m.dist_to_vgne == pytest.approx(0.0, abs=1e-15)
    assert m.entry_time == 0.0
    assert m.status == "ok"


def test_run_metrics_sinusoid_averages_out():
    game = _metric_game()
    times = np.linspace(0.0, 100.0, 20001)
    a = 0.4
    u_star = np.array([1.0, 2.0])
    u = u_star[None, :] + a * np.column_stack([np.sin(2.0 * times), np.cos(2.0 * times)])
    m = run_metrics(_traj(times, u), u_star, 1.0, game, sustain_time=np.pi)
    # >= 10 periods in the tail: the averaged distance collapses well below a/10
    assert m.dist_to_vgne < a / 10.0
    assert np.isfinite(m.entry_time)


def test_run_metrics_sentinel_when_never_inside():
    game = _metric_game()
    times = np.linspace(0.0, 10.0, 51)
    u = np.tile([9.0, 9.0], (51, 1))
    m = run_metrics(_traj(times, u), np.zeros(2), 1.0, game)
    assert np.isinf(m.entry_time)
    assert m.status == "did_not_converge"
    # tail max violation of u1 + u2 <= 5
    assert m.max_violation == pytest.approx(13.0)


def test_run_metrics_sustained_entry_skips_transients():
    game = _metric_game()
    times = np.linspace(0.0, 10.0, 1001)
    u = np.zeros((1001, 2))
    u[:, 0] = 5.0
    dip = (times >= 1.0) & (times <= 1.2)
    u[dip, 0] = 0.0  # brief excursion into the ball
    final = times >= 4.0
    u[final, 0] = 0.0
    m = run_metrics(_traj(times, u), np.zeros(2), 1.0, game, sustain_time=2.0)
    assert m.entry_time == pytest.approx(4.0, abs=0.02)


def test_sweep_grid_cells_and_validation():
    grid = SweepGrid(axes={"amplitude": [0.1, 0.3], "k_omega": [0.5, 1.0]})
    cells = grid.cells()
    assert len(cells) == 4
    assert cells[0] == {"amplitude": 0.1, "k_omega": 0.5}
    with pytest.raises(ValueError, match="unknown sweep axes"):
        SweepGrid(axes={"bogus": [1]})
    with pytest.raises(ValueError, match="at least one"):
        SweepGrid(axes={})


def test_sweep_single_cell_and_determinism(quadratic2_scenario):
    base = make_run_config(quadratic2_scenario, horizon=30.0, sample_stride=100)
    grid = SweepGrid(axes={"horizon": [30.0]})
    rows = sweep(grid, quadratic2_scenario, base, eps_ball=0.5)
    assert len(rows) == 1
    assert rows[0]["status"] in ("ok", "did_not_converge")
    rows2 = sweep(grid, quadratic2_scenario, base, eps_ball=0.5)
    assert rows == rows2


def test_sweep_records_cell_failures(quadratic2_scenario):
    base = make_run_config(quadratic2_scenario, horizon=30.0)
    grid = SweepGrid(axes={"step": [0.01, -1.0]})
    rows = sweep(grid, quadratic2_scenario, base, eps_ball=0.5)
    statuses = [r["status"] for r in rows]
    assert sum(str(s).startswith("failed") for s in statuses) == 1


def test_sweep_env_thread_cap(quadratic2_scenario, monkeypatch):
    from gne_esc.harness import sweep_workers

    monkeypatch.setenv("GNE_ESC_THREADS", "2")
    assert sweep_workers() == 2
    monkeypatch.delenv("GNE_ESC_THREADS")
    assert sweep_workers() >= 1


def test_make_run_config_overrides(quadratic2_scenario):
    cfg = make_run_config(quadratic2_scenario, mode="static_zero_order", horizon=12.0)
    assert cfg.mode == "static_zero_order"
    assert cfg.horizon == 12.0
    assert cfg.step == quadratic2_scenario.run_defaults["step"]


def test_dynamic_mode_step_warning(connectivity_scenario):
    from gne_esc.harness import build_closed_loop

    cfg = RunConfig(step=0.05, horizon=1.0, mode="dynamic_zero_order")
    with pytest.warns(UserWarning, match="epsilon/10"):
        build_closed_loop(connectivity_scenario, cfg)
