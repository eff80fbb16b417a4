import numpy as np
import pytest

from gne_esc.game import GameSpec
from gne_esc.scenarios import load_scenario
from gne_esc.sets import Box

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def two_agent_quadratic() -> GameSpec:
    """J_i = (u_i - 1)^2 with u_1 + u_2 <= 1 on [-10, 10]^2 (v-GNE at (0.5, 0.5))."""

    def cost(u_i, u_minus):
        return float((u_i[0] - 1.0) ** 2)

    def grad(u_i, u_minus):
        return np.array([2.0 * (u_i[0] - 1.0)])

    box = Box(np.array([-10.0]), np.array([10.0]))
    return GameSpec(
        dims=(1, 1),
        cost=(cost, cost),
        cost_grad=(grad, grad),
        local_sets=(box, box),
        coupling_A=np.array([[1.0, 1.0]]),
        coupling_b=np.array([1.0]),
    )


@pytest.fixture
def quad_game():
    return two_agent_quadratic()


@pytest.fixture(scope="session")
def quadratic2_scenario():
    return load_scenario("quadratic2")


@pytest.fixture(scope="session")
def connectivity_scenario():
    return load_scenario("connectivity")


@pytest.fixture(scope="session")
def windfarm_scenario():
    return load_scenario("windfarm")
