import numpy as np
import pytest

from gne_esc.game import (
    GameSpec,
    estimate_monotonicity,
    kkt_residual,
    pseudo_gradient,
)
from gne_esc.sets import Box


def test_pseudo_gradient_hand_case(quad_game):
    np.testing.assert_allclose(
        pseudo_gradient(quad_game, np.zeros(2)), [-2.0, -2.0], atol=1e-12
    )


def test_pseudo_gradient_finite_difference_matches_analytic(quad_game):
    fd_game = GameSpec(
        dims=quad_game.dims,
        cost=quad_game.cost,
        local_sets=quad_game.local_sets,
        coupling_A=quad_game.coupling_A,
        coupling_b=quad_game.coupling_b,
    )
    rng = np.random.default_rng(0)
    for _ in range(50):
        u = rng.uniform(-10, 10, 2)
        exact = pseudo_gradient(quad_game, u)
        approx = pseudo_gradient(fd_game, u)
        np.testing.assert_allclose(approx, exact, atol=1e-6)


def test_constant_cost_zero_gradient():
    box = Box(np.array([-1.0]), np.array([1.0]))
    game = GameSpec(
        dims=(1, 1),
        cost=(lambda ui, um: 3.0, lambda ui, um: -1.0),
        local_sets=(box, box),
        coupling_A=np.zeros((1, 2)),
        coupling_b=np.zeros(1),
    )
    np.testing.assert_allclose(
        pseudo_gradient(game, np.array([0.3, -0.2])), np.zeros(2), atol=1e-9
    )


def test_pseudo_gradient_dimension_mismatch(quad_game):
    with pytest.raises(ValueError, match="dim"):
        pseudo_gradient(quad_game, np.zeros(3))


def test_non_finite_cost_names_agent():
    box = Box(np.array([-1.0]), np.array([1.0]))
    game = GameSpec(
        dims=(1, 1),
        cost=(lambda ui, um: float("nan"), lambda ui, um: 0.0),
        local_sets=(box, box),
        coupling_A=np.zeros((1, 2)),
        coupling_b=np.zeros(1),
    )
    with pytest.raises(ValueError, match="agent 0"):
        pseudo_gradient(game, np.zeros(2))


def _linear_game(slope):
    box = Box(np.array([-5.0]), np.array([5.0]))

    def make(i):
        def cost(u_i, u_minus):
            return float(0.5 * slope * u_i[0] ** 2)

        def grad(u_i, u_minus):
            return np.array([slope * u_i[0]])

        return cost, grad

    c0, g0 = make(0)
    c1, g1 = make(1)
    return GameSpec(
        dims=(1, 1),
        cost=(c0, c1),
        cost_grad=(g0, g1),
        local_sets=(box, box),
        coupling_A=np.zeros((1, 2)),
        coupling_b=np.zeros(1),
    )


def test_monotonicity_probe_linear_map():
    game = _linear_game(2.0)
    rng = np.random.default_rng(1)
    pairs = [(rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2)) for _ in range(20)]
    mu_hat, ell_hat = estimate_monotonicity(game, pairs)
    assert mu_hat == pytest.approx(2.0, abs=1e-9)
    assert ell_hat == pytest.approx(2.0, abs=1e-9)


def test_monotonicity_probe_constant_field_warns():
    box = Box(np.array([-5.0]), np.array([5.0]))
    game = GameSpec(
        dims=(1,),
        cost=(lambda ui, um: 1.0,),
        cost_grad=(lambda ui, um: np.array([0.0]),),
        local_sets=(box,),
        coupling_A=np.zeros((1, 1)),
        coupling_b=np.zeros(1),
    )
    pairs = [(np.array([1.0]), np.array([-1.0]))]
    with pytest.warns(UserWarning, match="nonpositive"):
        mu_hat, _ = estimate_monotonicity(game, pairs)
    assert mu_hat == pytest.approx(0.0, abs=1e-12)


def test_monotonicity_probe_skips_coincident_pairs():
    game = _linear_game(1.0)
    u = np.array([1.0, 2.0])
    mu_hat, _ = estimate_monotonicity(game, [(u, u.copy()), (u, u + 1.0)])
    assert mu_hat == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="coincident"):
        estimate_monotonicity(game, [(u, u.copy())])


def test_monotonicity_connectivity_game(connectivity_scenario):
    game = connectivity_scenario.base_game()
    rng = np.random.default_rng(5)
    lo = np.tile([-16.0, -6.0], 4)
    hi = np.tile([16.0, 6.0], 4)
    pairs = [
        (rng.uniform(lo, hi), rng.uniform(lo, hi)) for _ in range(100)
    ]
    mu_hat, ell_hat = estimate_monotonicity(game, pairs)
    assert mu_hat > 0.0
    assert ell_hat >= mu_hat


def test_kkt_residual_at_analytic_solution(quad_game):
    res = kkt_residual(quad_game, np.array([0.5, 0.5]), np.array([1.0]))
    assert res < 1e-12


def test_kkt_residual_unconstrained_interior():
    box = Box(np.array([-10.0]), np.array([10.0]))
    game = GameSpec(
        dims=(1,),
        cost=(lambda ui, um: float((ui[0] - 2.0) ** 2),),
        cost_grad=(lambda ui, um: np.array([2.0 * (ui[0] - 2.0)]),),
        local_sets=(box,),
        coupling_A=np.zeros((1, 1)),
        coupling_b=np.ones(1),
    )
    assert kkt_residual(game, np.array([2.0]), np.zeros(1)) == pytest.approx(0.0)


def test_kkt_residual_infeasible_point(quad_game):
    # At u = (1, 1), lambda = 0: stationarity gap vanishes, the dual
    # projection gap is |max(A u - b, 0)| = 1.
    res = kkt_residual(quad_game, np.array([1.0, 1.0]), np.zeros(1))
    assert res == pytest.approx(1.0, abs=1e-12)


def test_kkt_residual_is_locally_lipschitz(quad_game):
    rng = np.random.default_rng(2)
    delta = 1e-6
    for _ in range(50):
        u = rng.uniform(-10, 10, 2)
        lam = rng.uniform(0, 3, 1)
        base = kkt_residual(quad_game, u, lam)
        du = rng.normal(size=2)
        dl = rng.normal(size=1)
        scale = np.sqrt(du @ du + dl @ dl)
        bumped = kkt_residual(quad_game, u + delta * du, lam + delta * dl)
        assert abs(bumped - base) <= 20.0 * delta * scale


def test_gamespec_validation_errors():
    box = Box(np.array([-1.0]), np.array([1.0]))
    with pytest.raises(ValueError, match="columns"):
        GameSpec(
            dims=(1, 1),
            cost=(lambda ui, um: 0.0, lambda ui, um: 0.0),
            local_sets=(box, box),
            coupling_A=np.zeros((1, 3)),
            coupling_b=np.zeros(1),
        )
    with pytest.raises(ValueError, match="local set"):
        GameSpec(
            dims=(2, 1),
            cost=(lambda ui, um: 0.0, lambda ui, um: 0.0),
            local_sets=(box, box),
            coupling_A=np.zeros((1, 3)),
            coupling_b=np.zeros(1),
        )


def test_bundled_scenarios_gradient_consistency(
    quadratic2_scenario, connectivity_scenario, windfarm_scenario
):
    """Analytic pseudo-gradients match central finite differences."""
    rng = np.random.default_rng(9)
    for scenario, n_pts in (
        (quadratic2_scenario, 100),
        (connectivity_scenario, 100),
        (windfarm_scenario, 25),
    ):
        game = scenario.base_game()
        fd_game = GameSpec(
            dims=game.dims,
            cost=game.cost,
            local_sets=game.local_sets,
            coupling_A=game.coupling_A,
            coupling_b=game.coupling_b,
        )
        lo = np.concatenate([s.lower for s in game.local_sets])
        hi = np.concatenate([s.upper for s in game.local_sets])
        for _ in range(n_pts):
            u = rng.uniform(lo, hi)
            exact = pseudo_gradient(game, u)
            approx = pseudo_gradient(fd_game, u)
            tol = max(1e-6, 1e-4 * np.linalg.norm(exact))
            assert np.linalg.norm(approx - exact) <= tol
