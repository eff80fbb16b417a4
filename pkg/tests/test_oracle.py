import numpy as np
import pytest

from gne_esc.game import GameSpec, kkt_residual
from gne_esc.harness import solve_interval_oracle
from gne_esc.oracle import (
    OracleSolution,
    QuadraticGameSpec,
    cached_vgne,
    solve_extragradient,
    solve_quadratic_kkt,
)
from gne_esc.sets import Box


def _quad_spec(quad_game):
    M = np.array([[2.0, 0.0], [0.0, 2.0]])
    c0 = np.array([-2.0, -2.0])
    return QuadraticGameSpec(quad_game, M, c0)


def test_quadratic_kkt_desk_example(quad_game):
    sol = solve_quadratic_kkt(_quad_spec(quad_game))
    np.testing.assert_allclose(sol.u_star, [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(sol.lambda_star, [1.0], atol=1e-12)
    assert sol.residual < 1e-10
    assert "coupling[0]" in sol.active_set


def test_quadratic_kkt_interior_optimum():
    box = Box(np.array([-10.0]), np.array([10.0]))
    game = GameSpec(
        dims=(1, 1),
        cost=(
            lambda ui, um: float((ui[0] - 0.2) ** 2),
            lambda ui, um: float((ui[0] + 0.1) ** 2),
        ),
        cost_grad=(
            lambda ui, um: np.array([2.0 * (ui[0] - 0.2)]),
            lambda ui, um: np.array([2.0 * (ui[0] + 0.1)]),
        ),
        local_sets=(box, box),
        coupling_A=np.array([[1.0, 1.0]]),
        coupling_b=np.array([5.0]),
    )
    quad = QuadraticGameSpec(game, 2.0 * np.eye(2), np.array([-0.4, 0.2]))
    sol = solve_quadratic_kkt(quad)
    np.testing.assert_allclose(sol.u_star, [0.2, -0.1], atol=1e-12)
    np.testing.assert_allclose(sol.lambda_star, [0.0], atol=1e-15)
    assert sol.active_set == ()


def test_quadratic_kkt_box_bound_active():
    box = Box(np.array([-1.0]), np.array([1.0]))
    game = GameSpec(
        dims=(1,),
        cost=(lambda ui, um: float((ui[0] - 2.0) ** 2),),
        cost_grad=(lambda ui, um: np.array([2.0 * (ui[0] - 2.0)]),),
        local_sets=(box,),
        coupling_A=np.zeros((1, 1)),
        coupling_b=np.ones(1),
    )
    sol = solve_quadratic_kkt(QuadraticGameSpec(game, 2.0 * np.eye(1), np.array([-4.0])))
    assert sol.u_star[0] == pytest.approx(1.0, abs=1e-12)
    assert sol.lambda_star[0] == pytest.approx(0.0, abs=1e-15)
    assert any("box" in label for label in sol.active_set)


def test_quadratic_kkt_rejects_non_monotone(quad_game):
    with pytest.raises(ValueError, match="strongly monotone"):
        solve_quadratic_kkt(
            QuadraticGameSpec(quad_game, -np.eye(2), np.zeros(2))
        )


def test_quadratic_kkt_enumeration_budget():
    n = 7
    box = Box(np.array([-1.0]), np.array([1.0]))
    game = GameSpec(
        dims=(1,) * n,
        cost=tuple(lambda ui, um: float(ui[0] ** 2) for _ in range(n)),
        cost_grad=tuple(lambda ui, um: 2.0 * ui for _ in range(n)),
        local_sets=(box,) * n,
        coupling_A=np.zeros((1, n)),
        coupling_b=np.ones(1),
    )
    with pytest.raises(ValueError, match="extragradient"):
        solve_quadratic_kkt(QuadraticGameSpec(game, 2.0 * np.eye(n), np.zeros(n)))


def test_extragradient_matches_kkt(quad_game):
    exact = solve_quadratic_kkt(_quad_spec(quad_game))
    sol = solve_extragradient(quad_game, tol=1e-8)
    assert sol.residual <= 1e-8
    np.testing.assert_allclose(sol.u_star, exact.u_star, atol=1e-6)


def test_extragradient_connectivity(connectivity_scenario):
    game = connectivity_scenario.base_game()
    sol = solve_extragradient(game, tol=1e-8)
    assert sol.residual < 1e-8
    assert np.all(game.coupling_A @ sol.u_star <= game.coupling_b + 1e-9)
    assert game.feasible_local(sol.u_star)
    assert np.all(sol.lambda_star >= 0.0)
    comp = sol.lambda_star @ (game.coupling_A @ sol.u_star - game.coupling_b)
    assert abs(comp) <= 1e-8


def test_extragradient_windfarm_all_directions(windfarm_scenario):
    for interval in windfarm_scenario.intervals(horizon=1e9):
        sol = solve_extragradient(
            interval.game,
            tol=1e-8,
            u0=np.full(interval.game.m_total, windfarm_scenario.plant.a_max),
        )
        assert sol.residual < 1e-8
        assert kkt_residual(interval.game, sol.u_star, sol.lambda_star) < 1e-8


def test_extragradient_unique_limit_from_random_starts(quad_game):
    rng = np.random.default_rng(0)
    sols = []
    for _ in range(10):
        sol = solve_extragradient(
            quad_game,
            tol=1e-8,
            u0=rng.uniform(-10, 10, 2),
            lam0=rng.uniform(0, 2, 1),
        )
        sols.append(sol.u_star)
    for u in sols[1:]:
        np.testing.assert_allclose(u, sols[0], atol=1e-6)


def test_extragradient_failure_reports_best(quad_game):
    with pytest.raises(RuntimeError, match="best residual"):
        solve_extragradient(quad_game, tol=1e-14, max_iters=10, polish=False)


def test_oracle_flow_agreement(quadratic2_scenario):
    """Terminal point of the full-information flow lands on the oracle."""
    from gne_esc.harness import RunConfig, build_closed_loop, integrate

    interval = quadratic2_scenario.intervals(1e9)[0]
    sol = solve_quadratic_kkt(interval.quad)
    cfg = RunConfig(step=0.01, horizon=150.0, sample_stride=100, mode="full_info")
    loop = build_closed_loop(quadratic2_scenario, cfg)
    traj = integrate(loop.rhs, loop.state0, cfg)
    traj.layout = loop.layout
    assert np.linalg.norm(traj.column("u")[-1] - sol.u_star) < 1e-4
    assert kkt_residual(interval.game, sol.u_star, sol.lambda_star) < 1e-10


def test_cached_vgne_roundtrip(tmp_path, quad_game):
    calls = {"n": 0}

    def solver():
        calls["n"] += 1
        return solve_quadratic_kkt(_quad_spec(quad_game))

    path = tmp_path / "cache.json"
    first = cached_vgne("key1", path, solver)
    second = cached_vgne("key1", path, solver)
    assert calls["n"] == 1
    np.testing.assert_allclose(first.u_star, second.u_star)
    assert isinstance(second, OracleSolution)


def test_interval_oracle_uses_cache(tmp_path, quadratic2_scenario):
    interval = quadratic2_scenario.intervals(1e9)[0]
    path = tmp_path / "vgne_cache.json"
    a = solve_interval_oracle(quadratic2_scenario, interval, path)
    assert path.exists()
    b = solve_interval_oracle(quadratic2_scenario, interval, path)
    np.testing.assert_allclose(a.u_star, b.u_star, atol=0)
