import copy

import numpy as np
import pytest

from gne_esc.game import pseudo_gradient
from gne_esc.scenarios import (
    ValidationError,
    bundled_scenario_names,
    load_scenario,
    scenario_from_dict,
)


def test_bundled_names_present():
    names = bundled_scenario_names()
    for expected in ("quadratic2", "connectivity", "connectivity_static", "windfarm"):
        assert expected in names


def test_unknown_scenario_lists_bundled():
    with pytest.raises(FileNotFoundError, match="quadratic2"):
        load_scenario("no_such_scenario")


def test_missing_fields_collected(connectivity_scenario):
    cfg = copy.deepcopy(connectivity_scenario.resolved)
    del cfg["game"]["coupling_bound"]
    del cfg["game"]["x_min"]
    with pytest.raises(ValidationError) as err:
        scenario_from_dict(cfg)
    text = "\n".join(err.value.errors)
    assert "coupling_bound" in text
    assert "x_min" in text


def test_bad_mode_rejected(quadratic2_scenario):
    cfg = copy.deepcopy(quadratic2_scenario.resolved)
    cfg["run"]["mode"] = "warp_speed"
    with pytest.raises(ValidationError, match="mode"):
        scenario_from_dict(cfg)


def test_zero_order_requires_dither(quadratic2_scenario):
    cfg = copy.deepcopy(quadratic2_scenario.resolved)
    cfg["run"]["mode"] = "static_zero_order"
    del cfg["dither"]
    with pytest.raises(ValidationError, match="dither"):
        scenario_from_dict(cfg)


def test_resolved_roundtrip(quadratic2_scenario, connectivity_scenario, windfarm_scenario):
    for scenario in (quadratic2_scenario, connectivity_scenario, windfarm_scenario):
        again = scenario_from_dict(copy.deepcopy(scenario.resolved))
        assert again.resolved == scenario.resolved


def test_windfarm_intervals_and_wakes(windfarm_scenario):
    ivs = windfarm_scenario.intervals(horizon=9000.0)
    assert len(ivs) == 3
    assert ivs[0].t_start == 0.0
    assert ivs[1].t_start == 3000.0
    assert ivs[2].t_end == 9000.0
    assert not np.array_equal(ivs[0].wake, ivs[1].wake)
    # shorter horizons clip the schedule
    assert len(windfarm_scenario.intervals(horizon=2500.0)) == 1


def test_initial_conditions(windfarm_scenario, connectivity_scenario):
    game_w = windfarm_scenario.base_game()
    u0 = windfarm_scenario.initial_decision(game_w)
    np.testing.assert_allclose(u0, windfarm_scenario.plant.a_max)
    x0 = windfarm_scenario.initial_plant_state(game_w, u0)
    np.testing.assert_allclose(x0, u0)
    game_c = connectivity_scenario.base_game()
    np.testing.assert_allclose(connectivity_scenario.initial_decision(game_c), 0.0)
    x0c = connectivity_scenario.initial_plant_state(game_c, np.zeros(8))
    assert x0c.shape == (12,)


def test_estimator_tunings_shapes(connectivity_scenario):
    game = connectivity_scenario.base_game()
    tunings = connectivity_scenario.estimator_tunings(game)
    assert len(tunings) == 4
    for t in tunings:
        assert t.Sigma0.shape == (3, 3)
        assert t.Theta.dim == 3


def test_quadratic_config_gradients_match_fd(quadratic2_scenario):
    interval = quadratic2_scenario.intervals(1e9)[0]
    game, quad = interval.game, interval.quad
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = rng.uniform(-10, 10, 2)
        np.testing.assert_allclose(
            pseudo_gradient(game, u), quad.M @ u + quad.c0, atol=1e-10
        )


def test_asymmetric_quadratic_config_rejected(quadratic2_scenario):
    cfg = copy.deepcopy(quadratic2_scenario.resolved)
    cfg["game"]["Q"][0] = [[2.0, 1.0], [0.0, 0.0]]
    with pytest.raises(ValidationError, match="symmetric"):
        scenario_from_dict(cfg)


def test_frequency_range_draw_is_seeded(windfarm_scenario):
    cfg = copy.deepcopy(windfarm_scenario.resolved)
    a = scenario_from_dict(copy.deepcopy(cfg))
    b = scenario_from_dict(copy.deepcopy(cfg))
    for wa, wb in zip(a.dither.base_frequencies, b.dither.base_frequencies):
        np.testing.assert_array_equal(wa, wb)
        assert np.all(wa >= 3.0) and np.all(wa <= 11.0)
    cfg["dither"]["frequency_seed"] = 8
    c = scenario_from_dict(cfg)
    assert not np.array_equal(
        np.concatenate(c.dither.base_frequencies),
        np.concatenate(a.dither.base_frequencies),
    )


def test_cost_vector_agrees_with_callbacks(
    quadratic2_scenario, connectivity_scenario, windfarm_scenario
):
    rng = np.random.default_rng(12)
    for scenario in (connectivity_scenario, windfarm_scenario):
        game = scenario.base_game()
        lo = np.concatenate([s.lower for s in game.local_sets])
        hi = np.concatenate([s.upper for s in game.local_sets])
        for _ in range(20):
            u = rng.uniform(lo, hi)
            fast = game.eval_costs(u)
            slow = np.array([game.eval_cost(i, u) for i in range(game.n_agents)])
            np.testing.assert_allclose(fast, slow, rtol=1e-12)
