"""Nonlinear agent dynamics and the two application scenarios.

Unicycle fleet: each vehicle runs a setpoint regulator toward the decision
u_i (target coordinates); the closed loop in (x, y, phi) contracts the
distance to the setpoint at rate K1 cos^2(phi) while the heading error
phi decays at K2. Cost outputs measure squared distance to an assigned
source plus a connectivity penalty over the fleet.

Wind farm: first-order axial-induction dynamics toward the reference u_i;
the shared cost output is the negated farm power under a Jensen-type wake
interaction, identical for every turbine (potential game).

Both plants are integrated as eps * dx = f(x, u) on the global clock, so
the right-hand side below returns f(x, u) / eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import GameSpec
from .sets import Box

__all__ = [
    "PlantState",
    "UnicycleParams",
    "WindFarmParams",
    "DecayReport",
    "plant_rhs",
    "cost_output",
    "steady_state_residual",
    "frozen_input_decay_probe",
    "pair_difference_constraints",
    "jensen_wake_matrix",
    "unicycle_game",
    "windfarm_game",
    "farm_power",
]


@dataclass
class PlantState:
    """Stacked physical states plus the time-scale separation constant."""

    x: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class UnicycleParams:
    """Connectivity-control fleet: regulator gains, sources, constraints."""

    K1: np.ndarray
    K2: np.ndarray
    sources: np.ndarray           # (N, 2) assigned source positions
    coupling_weight: float        # c in the connectivity penalty
    coupling_bound: float         # b in |u_i - u_j|_inf <= b
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    domain_margin: float = 8.0    # inflation of the traversing rectangle for X_i
    phi_max: float = float(np.pi)

    def __post_init__(self):
        src = np.atleast_2d(np.asarray(self.sources, dtype=float))
        object.__setattr__(self, "sources", src)
        k1 = np.broadcast_to(np.asarray(self.K1, float), (src.shape[0],)).copy()
        k2 = np.broadcast_to(np.asarray(self.K2, float), (src.shape[0],)).copy()
        object.__setattr__(self, "K1", k1)
        object.__setattr__(self, "K2", k2)
        if np.any(k1 <= 0) or np.any(k2 <= 0):
            raise ValueError("regulator gains must be positive")
        if not (self.coupling_weight > 0 and self.coupling_bound > 0):
            raise ValueError("coupling weight and bound must be positive")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("traversing rectangle is empty")

    @property
    def n_agents(self) -> int:
        return self.sources.shape[0]

    def decision_box(self) -> Box:
        return Box(
            np.array([self.x_min, self.y_min]), np.array([self.x_max, self.y_max])
        )

    def state_domain_ok(self, x: np.ndarray) -> bool:
        """Compact-domain check for the fleet state (positions and headings)."""
        s = x.reshape(self.n_agents, 3)
        inflate = self.domain_margin
        ok_x = np.all(
            (s[:, 0] >= self.x_min - inflate) & (s[:, 0] <= self.x_max + inflate)
        )
        ok_y = np.all(
            (s[:, 1] >= self.y_min - inflate) & (s[:, 1] <= self.y_max + inflate)
        )
        ok_phi = np.all(np.abs(s[:, 2]) <= self.phi_max)
        return bool(ok_x and ok_y and ok_phi)


@dataclass(frozen=True)
class WindFarmParams:
    """Wind farm layout, AIL dynamics and wake-model configuration."""

    rows: int
    cols: int
    spacing_x: float
    spacing_y: float
    rotor_radius: float
    wake_decay: float
    tau: float
    rho_air: float
    rotor_area: float
    U_inf: float
    a_min: float
    a_max: float
    row_bound: float
    power_scale: float = 1.0
    domain_margin: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.a_min < self.a_max <= 1.0 / 3.0 + 1e-9):
            raise ValueError("need 0 < a_min < a_max <= 1/3")
        if self.tau <= 0 or self.rotor_radius <= 0 or self.wake_decay <= 0:
            raise ValueError("tau, rotor radius and wake decay must be positive")
        if self.row_bound <= 0:
            raise ValueError("row coupling bound must be positive")

    @property
    def n_agents(self) -> int:
        return self.rows * self.cols

    def positions(self) -> np.ndarray:
        """Turbine coordinates, index i = row * cols + col (row 0 upwind-most)."""
        pos = np.zeros((self.n_agents, 2))
        for r in range(self.rows):
            for c in range(self.cols):
                pos[r * self.cols + c] = (c * self.spacing_x, -r * self.spacing_y)
        return pos

    def decision_box(self) -> Box:
        return Box(np.array([self.a_min]), np.array([self.a_max]))

    def state_domain_ok(self, x: np.ndarray) -> bool:
        return bool(
            np.all(x >= self.a_min - self.domain_margin)
            and np.all(x <= self.a_max + self.domain_margin)
        )

    def row_pairs(self) -> list[tuple[int, int]]:
        """All turbine pairs (i, j) with j in the row succeeding i's row."""
        pairs = []
        for r in range(self.rows - 1):
            for c1 in range(self.cols):
                for c2 in range(self.cols):
                    pairs.append((r * self.cols + c1, (r + 1) * self.cols + c2))
        return pairs


def pair_difference_constraints(
    index_pairs: list[tuple[int, int]], m: int, bound: float
) -> tuple[np.ndarray, np.ndarray]:
    """Compile |u_p - u_q| <= bound over scalar index pairs into A u <= b.

    Two rows per scalar pair: (u_p - u_q) <= bound and (u_q - u_p) <= bound.
    """
    A = np.zeros((2 * len(index_pairs), m))
    for k, (p, q) in enumerate(index_pairs):
        A[2 * k, p] = 1.0
        A[2 * k, q] = -1.0
        A[2 * k + 1, p] = -1.0
        A[2 * k + 1, q] = 1.0
    b = np.full(2 * len(index_pairs), float(bound))
    return A, b


# ---------------------------------------------------------------------------
# Unicycle closed loop
# ---------------------------------------------------------------------------


def _unicycle_f(params: UnicycleParams, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Unscaled state flow f(x, u) of the regulated fleet.

    The heading term uses the two-argument arctangent of the setpoint
    error (no singularity on the y-axis), with the orientation convention
    under which the distance to the setpoint contracts as
    d||r - u||/dt = -K1 ||r - u|| cos^2(phi).
    """
    s = x.reshape(params.n_agents, 3)
    targets = u.reshape(params.n_agents, 2)
    err = s[:, :2] - targets
    R = np.hypot(err[:, 0], err[:, 1])
    psi = np.arctan2(err[:, 1], err[:, 0])
    phi = s[:, 2]
    speed = -params.K1 * R * np.cos(phi)
    out = np.empty_like(s)
    out[:, 0] = speed * np.cos(phi + psi)
    out[:, 1] = speed * np.sin(phi + psi)
    out[:, 2] = -params.K2 * phi
    return out.ravel()


def _unicycle_positions(params: UnicycleParams, x: np.ndarray) -> np.ndarray:
    return x.reshape(params.n_agents, 3)[:, :2]


def _unicycle_outputs(params: UnicycleParams, positions: np.ndarray) -> np.ndarray:
    """y_i = ||r_i - r_i^s||^2 + c sum_j ||r_i - r_j||^2 from fleet positions."""
    src_term = np.sum((positions - params.sources) ** 2, axis=1)
    diff = positions[:, None, :] - positions[None, :, :]
    pair_sq = np.sum(diff**2, axis=2)
    return src_term + params.coupling_weight * pair_sq.sum(axis=1)


def unicycle_steady_state(params: UnicycleParams, u: np.ndarray) -> np.ndarray:
    """pi_i(u_i) = (u_i, 0): vehicle at its setpoint with zero heading error."""
    targets = u.reshape(params.n_agents, 2)
    out = np.zeros((params.n_agents, 3))
    out[:, :2] = targets
    return out.ravel()


def unicycle_game(params: UnicycleParams) -> GameSpec:
    """Steady-state connectivity game over the setpoint decisions."""
    n = params.n_agents
    c = params.coupling_weight
    sources = params.sources

    def make_cost(i):
        def cost_i(u_i, u_minus):
            others = u_minus.reshape(n - 1, 2)
            return float(
                np.sum((u_i - sources[i]) ** 2)
                + c * np.sum((u_i[None, :] - others) ** 2)
            )

        return cost_i

    def make_grad(i):
        def grad_i(u_i, u_minus):
            others = u_minus.reshape(n - 1, 2)
            return 2.0 * (u_i - sources[i]) + 2.0 * c * np.sum(
                u_i[None, :] - others, axis=0
            )

        return grad_i

    def cost_vector(u):
        return _unicycle_outputs(params, u.reshape(n, 2))

    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            pairs.extend([(2 * i, 2 * j), (2 * i + 1, 2 * j + 1)])
    A, b = pair_difference_constraints(pairs, 2 * n, params.coupling_bound)
    box = params.decision_box()
    return GameSpec(
        dims=(2,) * n,
        cost=tuple(make_cost(i) for i in range(n)),
        cost_grad=tuple(make_grad(i) for i in range(n)),
        local_sets=(box,) * n,
        coupling_A=A,
        coupling_b=b,
        cost_vector=cost_vector,
    )


# ---------------------------------------------------------------------------
# Wind farm
# ---------------------------------------------------------------------------


def _circle_overlap_fraction(r_rotor: float, r_wake: float, offset: float) -> float:
    """Fraction of the rotor disc covered by a wake disc at the given offset."""
    if offset >= r_wake + r_rotor:
        return 0.0
    if offset <= r_rotor - r_wake:
        # Wake disc entirely inside the rotor disc.
        return (r_wake / r_rotor) ** 2
    if offset <= r_wake - r_rotor:
        return 1.0
    d2 = offset * offset
    alpha = np.arccos(
        np.clip((d2 + r_rotor**2 - r_wake**2) / (2 * offset * r_rotor), -1.0, 1.0)
    )
    beta = np.arccos(
        np.clip((d2 + r_wake**2 - r_rotor**2) / (2 * offset * r_wake), -1.0, 1.0)
    )
    area = (
        r_rotor**2 * alpha
        + r_wake**2 * beta
        - offset * r_rotor * np.sin(alpha)
    )
    return float(area / (np.pi * r_rotor**2))


def jensen_wake_matrix(params: WindFarmParams, direction: np.ndarray) -> np.ndarray:
    """Wake coupling coefficients C[j, i] = c_ji for a wind direction.

    Top-hat Jensen kernel with linear wake expansion and partial rotor
    overlap: c_ji = overlap_fraction * (R / (R + k s))^2 for turbine i a
    downwind distance s > 0 behind turbine j, zero otherwise (no self-wake).
    """
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise ValueError("wind direction must be a nonzero vector")
    what = direction / norm
    pos = params.positions()
    n = params.n_agents
    C = np.zeros((n, n))
    for j in range(n):
        for i in range(n):
            if i == j:
                continue
            rel = pos[i] - pos[j]
            s = float(rel @ what)
            if s <= 0.0:
                continue
            offset = float(np.linalg.norm(rel - s * what))
            r_wake = params.rotor_radius + params.wake_decay * s
            frac = _circle_overlap_fraction(params.rotor_radius, r_wake, offset)
            if frac > 0.0:
                C[j, i] = frac * (params.rotor_radius / r_wake) ** 2
    return C


def _wake_deficit(a: np.ndarray, C: np.ndarray) -> np.ndarray:
    """sqrt(sum_j (a_j c_ji)^2) per turbine."""
    return np.sqrt(np.sum((a[:, None] * C) ** 2, axis=0))


def wind_speeds(params: WindFarmParams, a: np.ndarray, C: np.ndarray) -> np.ndarray:
    V = params.U_inf * (1.0 - 2.0 * _wake_deficit(a, C))
    if np.any(V < 0.0):
        raise ValueError(
            "negative waked wind speed; wake matrix is unphysical for these inductions"
        )
    return V


def _cp(a: np.ndarray) -> np.ndarray:
    return a * (1.0 - a) ** 2


def _cp_prime(a: np.ndarray) -> np.ndarray:
    return (1.0 - a) * (1.0 - 3.0 * a)


def farm_power(params: WindFarmParams, a: np.ndarray, C: np.ndarray) -> float:
    """Total farm power (in power_scale units) at inductions a."""
    V = wind_speeds(params, a, C)
    return float(
        params.power_scale * 0.5 * params.rho_air * params.rotor_area * np.sum(_cp(a) * V**3)
    )


def farm_power_gradient(
    params: WindFarmParams, a: np.ndarray, C: np.ndarray
) -> np.ndarray:
    """Analytic gradient of farm_power in the induction vector."""
    V = wind_speeds(params, a, C)
    deficit = _wake_deficit(a, C)
    k0 = params.power_scale * 0.5 * params.rho_air * params.rotor_area
    grad = k0 * _cp_prime(a) * V**3
    # dV_i/da_k = -2 U a_k c_ki^2 / deficit_i wherever turbine i is waked.
    waked = deficit > 1e-300
    if np.any(waked):
        coeff = k0 * 3.0 * _cp(a)[waked] * V[waked] ** 2
        dV = (
            -2.0
            * params.U_inf
            * (a[:, None] * C[:, waked] ** 2)
            / deficit[waked][None, :]
        )
        grad = grad + dV @ coeff
    return grad


def windfarm_game(params: WindFarmParams, wake: np.ndarray) -> GameSpec:
    """Potential game: every turbine minimizes the negated total power."""
    n = params.n_agents

    def make_cost(i):
        def cost_i(u_i, u_minus):
            a = np.concatenate([u_minus[:i], u_i, u_minus[i:]])
            return -farm_power(params, a, wake)

        return cost_i

    def make_grad(i):
        def grad_i(u_i, u_minus):
            a = np.concatenate([u_minus[:i], u_i, u_minus[i:]])
            return -farm_power_gradient(params, a, wake)[i : i + 1]

        return grad_i

    def cost_vector(u):
        return np.full(n, -farm_power(params, u, wake))

    A, b = pair_difference_constraints(params.row_pairs(), n, params.row_bound)
    box = params.decision_box()
    return GameSpec(
        dims=(1,) * n,
        cost=tuple(make_cost(i) for i in range(n)),
        cost_grad=tuple(make_grad(i) for i in range(n)),
        local_sets=(box,) * n,
        coupling_A=A,
        coupling_b=b,
        cost_vector=cost_vector,
    )


# ---------------------------------------------------------------------------
# Common plant surface
# ---------------------------------------------------------------------------


def _plant_f(scenario, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    if isinstance(scenario, UnicycleParams):
        return _unicycle_f(scenario, x, u)
    if isinstance(scenario, WindFarmParams):
        return -(x - u) / scenario.tau
    raise TypeError(f"unknown plant scenario {type(scenario)!r}")


def plant_rhs(scenario, state: PlantState, u: np.ndarray) -> np.ndarray:
    """State derivative f(x, u) / eps on the global simulation clock."""
    return _plant_f(scenario, state.x, np.asarray(u, dtype=float)) / state.epsilon


def cost_output(scenario, state: PlantState, wake: np.ndarray | None = None) -> np.ndarray:
    """Per-agent measured outputs y_i at the current plant state."""
    if isinstance(scenario, UnicycleParams):
        return _unicycle_outputs(scenario, _unicycle_positions(scenario, state.x))
    if isinstance(scenario, WindFarmParams):
        if wake is None:
            raise ValueError("wind farm output needs the active wake matrix")
        power = farm_power(scenario, state.x, wake)
        return np.full(scenario.n_agents, -power)
    raise TypeError(f"unknown plant scenario {type(scenario)!r}")


def steady_state(scenario, u: np.ndarray) -> np.ndarray:
    if isinstance(scenario, UnicycleParams):
        return unicycle_steady_state(scenario, u)
    if isinstance(scenario, WindFarmParams):
        return np.asarray(u, dtype=float).copy()
    raise TypeError(f"unknown plant scenario {type(scenario)!r}")


def steady_state_map(scenario):
    """Per-agent steady-state mapping of the scenario's plant family."""
    from .game import SteadyStateMap

    if isinstance(scenario, UnicycleParams):
        def make(i):
            def pi_i(u_i):
                return np.array([u_i[0], u_i[1], 0.0])

            def jac_i(u_i):
                return np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])

            return pi_i, jac_i

        pairs = [make(i) for i in range(scenario.n_agents)]
        return SteadyStateMap(
            pi=tuple(p for p, _ in pairs), pi_jacobian=tuple(j for _, j in pairs)
        )
    if isinstance(scenario, WindFarmParams):
        return SteadyStateMap(
            pi=tuple(
                (lambda u_i: np.asarray(u_i, float).copy())
                for _ in range(scenario.n_agents)
            ),
            pi_jacobian=tuple(
                (lambda u_i: np.eye(1)) for _ in range(scenario.n_agents)
            ),
        )
    raise TypeError(f"unknown plant scenario {type(scenario)!r}")


def steady_state_residual(scenario, u: np.ndarray) -> float:
    """||f(pi(u), u)||; zero when the steady-state map is exact."""
    u = np.asarray(u, dtype=float)
    return float(np.linalg.norm(_plant_f(scenario, steady_state(scenario, u), u)))


@dataclass
class DecayReport:
    """Outcome of a frozen-input stability probe."""

    rate: float
    initial_norm: float
    final_norm: float
    diverged: bool
    times: np.ndarray = field(repr=False, default=None)
    norms: np.ndarray = field(repr=False, default=None)


def frozen_input_decay_probe(
    scenario,
    u_bar: np.ndarray,
    x0: PlantState,
    horizon: float,
    step: float = 1e-3,
) -> DecayReport:
    """Simulate eps dx = f(x, u_bar) and fit an exponential decay envelope.

    Empirical stand-in for the Lyapunov-stability assumption on the
    plants: reports the fitted decay rate of ||x(t) - pi(u_bar)|| and
    flags divergence when the norm grows tenfold.
    """
    u_bar = np.asarray(u_bar, dtype=float)
    target = steady_state(scenario, u_bar)
    x = x0.x.copy()
    eps = x0.epsilon
    n_steps = max(1, int(round(horizon / step)))
    norms = [float(np.linalg.norm(x - target))]
    times = [0.0]
    for k in range(n_steps):
        k1 = _plant_f(scenario, x, u_bar) / eps
        k2 = _plant_f(scenario, x + 0.5 * step * k1, u_bar) / eps
        k3 = _plant_f(scenario, x + 0.5 * step * k2, u_bar) / eps
        k4 = _plant_f(scenario, x + step * k3, u_bar) / eps
        x = x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        norms.append(float(np.linalg.norm(x - target)))
        times.append((k + 1) * step)
    norms_arr = np.asarray(norms)
    times_arr = np.asarray(times)
    initial = norms_arr[0]
    diverged = bool(np.max(norms_arr) > 10.0 * max(initial, 1e-300))
    if initial == 0.0:
        return DecayReport(0.0, 0.0, norms_arr[-1], diverged, times_arr, norms_arr)
    # Least-squares line through log||x - pi|| over the samples above noise floor.
    floor = max(1e-14, 1e-10 * initial)
    keep = norms_arr > floor
    if np.count_nonzero(keep) < 2:
        return DecayReport(
            float("inf"), initial, norms_arr[-1], diverged, times_arr, norms_arr
        )
    slope = np.polyfit(times_arr[keep], np.log(norms_arr[keep]), 1)[0]
    return DecayReport(
        float(-slope), initial, norms_arr[-1], diverged, times_arr, norms_arr
    )
