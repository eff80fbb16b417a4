"""Scenario descriptions: declarative TOML configs resolved into games,
step sizes, dither specs, estimator tunings and plant parameters.

Three scenario kinds are bundled:

* ``quadratic``  -- custom quadratic games (per-agent matrices Q_i, linear
  terms, coupling A u <= b, box bounds); static agents.
* ``unicycle``   -- the connectivity-control fleet.
* ``windfarm``   -- axial-induction wind farm with a wind-direction
  schedule; each interval has its own wake matrix and steady-state game.

``load_scenario`` accepts a bundled name or a file path, validates the
config (collecting every offending field), and returns a resolved
Scenario whose ``resolved`` dict round-trips through the run manifest.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .controller import DitherSpec
from .estimator import EstimatorTuning
from .full_info import StepSizes
from .game import GameSpec
from .oracle import QuadraticGameSpec
from .plants import (
    UnicycleParams,
    WindFarmParams,
    jensen_wake_matrix,
    unicycle_game,
    windfarm_game,
)
from .sets import Box

__all__ = [
    "Scenario",
    "Interval",
    "ValidationError",
    "load_scenario",
    "scenario_from_dict",
    "bundled_scenario_path",
    "bundled_scenario_names",
]

MODES = ("full_info", "static_zero_order", "dynamic_zero_order")


class ValidationError(ValueError):
    """Config validation failure carrying every offending field."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario config:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class Interval:
    """One constant-game stretch of simulation time."""

    t_start: float
    t_end: float
    game: GameSpec
    quad: QuadraticGameSpec | None
    wake: np.ndarray | None
    label: str


@dataclass
class Scenario:
    name: str
    kind: str
    steps: StepSizes
    dither: DitherSpec | None
    estimator: dict | None
    plant: UnicycleParams | WindFarmParams | None
    epsilon: float | None
    run_defaults: dict
    init: dict
    resolved: dict
    _schedule: list[tuple[float, np.ndarray]] | None = None  # windfarm directions

    # -- games ------------------------------------------------------------

    def base_game(self) -> GameSpec:
        return self.intervals(horizon=float("inf"))[0].game

    def intervals(self, horizon: float) -> list[Interval]:
        """Time-ordered constant-game intervals covering [0, horizon]."""
        if self.kind != "windfarm":
            game, quad = self._static_game()
            return [Interval(0.0, horizon, game, quad, None, self.name)]
        out = []
        sched = self._schedule
        for k, (t0, direction) in enumerate(sched):
            if t0 >= horizon:
                break
            t1 = sched[k + 1][0] if k + 1 < len(sched) else float("inf")
            wake = jensen_wake_matrix(self.plant, direction)
            game = windfarm_game(self.plant, wake)
            label = f"dir({direction[0]:g},{direction[1]:g})"
            out.append(Interval(t0, min(t1, horizon), game, None, wake, label))
        return out

    def _static_game(self) -> tuple[GameSpec, QuadraticGameSpec | None]:
        if self.kind == "unicycle":
            game = unicycle_game(self.plant)
            return game, QuadraticGameSpec(game, *_unicycle_affine(self.plant))
        if self.kind == "quadratic":
            return _quadratic_game(self.resolved["game"])
        raise ValueError(f"no static game for kind {self.kind!r}")

    # -- per-agent estimator tunings ---------------------------------------

    def estimator_tunings(self, game: GameSpec) -> list[EstimatorTuning]:
        if self.estimator is None:
            raise ValueError("scenario has no estimator section")
        est = self.estimator
        out = []
        for m_i in game.dims:
            p = m_i + 1
            bound = float(est["theta_bound"])
            out.append(
                EstimatorTuning(
                    K=float(est["gain"]),
                    rho=float(est["rho"]),
                    sigma=float(est["sigma"]),
                    Sigma0=float(est["sigma0"]) * np.eye(p),
                    Theta=Box(-bound * np.ones(p), bound * np.ones(p)),
                )
            )
        return out

    # -- initial conditions -------------------------------------------------

    def initial_decision(self, game: GameSpec) -> np.ndarray:
        u0 = self.init.get("u0", "zeros")
        if isinstance(u0, str):
            if u0 == "zeros":
                return np.zeros(game.m_total)
            if u0 == "greedy" and self.kind == "windfarm":
                return np.full(game.m_total, self.plant.a_max)
            raise ValueError(f"unknown symbolic initial decision {u0!r}")
        vec = np.asarray(u0, dtype=float).ravel()
        if vec.size != game.m_total:
            raise ValueError("u0 length does not match the decision dimension")
        return vec

    def initial_plant_state(self, game: GameSpec, u0: np.ndarray) -> np.ndarray | None:
        if self.plant is None:
            return None
        x0 = self.init.get("x0")
        if x0 is not None:
            return np.asarray(x0, dtype=float).ravel()
        from .plants import steady_state

        return steady_state(self.plant, u0)


# ---------------------------------------------------------------------------
# Game builders
# ---------------------------------------------------------------------------


def _unicycle_affine(params: UnicycleParams) -> tuple[np.ndarray, np.ndarray]:
    """Affine pseudo-gradient blocks (M, c0) of the connectivity game."""
    n = params.n_agents
    m = 2 * n
    c = params.coupling_weight
    M = np.zeros((m, m))
    c0 = np.zeros(m)
    for i in range(n):
        bi = slice(2 * i, 2 * i + 2)
        M[bi, bi] = (2.0 + 2.0 * c * (n - 1)) * np.eye(2)
        for j in range(n):
            if j != i:
                M[bi, slice(2 * j, 2 * j + 2)] = -2.0 * c * np.eye(2)
        c0[bi] = -2.0 * params.sources[i]
    return M, c0


def _quadratic_game(cfg: dict) -> tuple[GameSpec, QuadraticGameSpec]:
    dims = tuple(int(d) for d in cfg["dims"])
    m = sum(dims)
    offsets = np.concatenate([[0], np.cumsum(dims)])
    Qs = [np.asarray(Qi, dtype=float) for Qi in cfg["Q"]]
    qs = [np.asarray(qi, dtype=float) for qi in cfg["q"]]
    lower = np.asarray(cfg["lower"], dtype=float)
    upper = np.asarray(cfg["upper"], dtype=float)

    def make_cost(i):
        start = int(offsets[i])

        def cost_i(u_i, u_minus):
            u = np.concatenate([u_minus[:start], u_i, u_minus[start:]])
            return float(0.5 * u @ Qs[i] @ u + qs[i] @ u)

        return cost_i

    def make_grad(i):
        blk = slice(int(offsets[i]), int(offsets[i + 1]))
        start = int(offsets[i])

        def grad_i(u_i, u_minus):
            u = np.concatenate([u_minus[:start], u_i, u_minus[start:]])
            return (Qs[i] @ u + qs[i])[blk]

        return grad_i

    sets = tuple(
        Box(lower[offsets[i] : offsets[i + 1]], upper[offsets[i] : offsets[i + 1]])
        for i in range(len(dims))
    )
    game = GameSpec(
        dims=dims,
        cost=tuple(make_cost(i) for i in range(len(dims))),
        cost_grad=tuple(make_grad(i) for i in range(len(dims))),
        local_sets=sets,
        coupling_A=np.asarray(cfg["A"], dtype=float),
        coupling_b=np.asarray(cfg["b"], dtype=float),
    )
    M = np.zeros((m, m))
    c0 = np.zeros(m)
    for i in range(len(dims)):
        blk = slice(int(offsets[i]), int(offsets[i + 1]))
        M[blk, :] = Qs[i][blk, :]
        c0[blk] = qs[i][blk]
    return game, QuadraticGameSpec(game, M, c0)


# ---------------------------------------------------------------------------
# Config parsing and validation
# ---------------------------------------------------------------------------


def bundled_scenario_path(name: str) -> Path:
    return Path(resources.files("gne_esc") / "scenarios" / f"{name}.toml")


def bundled_scenario_names() -> list[str]:
    folder = resources.files("gne_esc") / "scenarios"
    return sorted(p.stem for p in Path(folder).glob("*.toml"))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a TOML path or a bundled scenario name."""
    path = Path(source)
    if not path.exists():
        candidate = bundled_scenario_path(str(source))
        if candidate.exists():
            path = candidate
        else:
            raise FileNotFoundError(
                f"scenario {source!r} not found (no such file; bundled names: "
                f"{', '.join(bundled_scenario_names())})"
            )
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    return scenario_from_dict(cfg)


def _require(cfg, section, key, errors, kind=None, default=None):
    if section not in cfg:
        errors.append(f"missing section [{section}]")
        return default
    if key not in cfg[section]:
        errors.append(f"missing field {section}.{key}")
        return default
    value = cfg[section][key]
    if kind is not None:
        try:
            return kind(value)
        except (TypeError, ValueError):
            errors.append(f"field {section}.{key} has invalid value {value!r}")
            return default
    return value


def scenario_from_dict(cfg: dict) -> Scenario:
    """Resolve a parsed config dict into a Scenario (validating everything)."""
    cfg = copy.deepcopy(cfg)
    errors: list[str] = []
    name = cfg.get("name") or "unnamed"
    kind = cfg.get("kind")
    if kind not in ("quadratic", "unicycle", "windfarm"):
        errors.append(f"kind must be one of quadratic|unicycle|windfarm, got {kind!r}")
        raise ValidationError(errors)

    gamma = _require(cfg, "steps", "gamma", errors)
    gamma0 = _require(cfg, "steps", "gamma0", errors, float)

    run = cfg.get("run", {})
    run.setdefault("mode", "full_info" if kind == "quadratic" else "dynamic_zero_order")
    run.setdefault("step", 0.01)
    run.setdefault("horizon", 100.0)
    run.setdefault("sample_stride", 10)
    run.setdefault("seed", 0)
    if run["mode"] not in MODES:
        errors.append(f"run.mode must be one of {MODES}, got {run['mode']!r}")
    cfg["run"] = run

    plant = None
    epsilon = None
    schedule = None
    n_agents = None
    dims = None

    if kind == "quadratic":
        game_cfg = cfg.get("game", {})
        for key in ("dims", "Q", "q", "A", "b", "lower", "upper"):
            if key not in game_cfg:
                errors.append(f"missing field game.{key}")
        if not errors:
            dims = tuple(int(d) for d in game_cfg["dims"])
            n_agents = len(dims)
            m = sum(dims)
            for i, Qi in enumerate(game_cfg["Q"]):
                Qi = np.asarray(Qi, dtype=float)
                if Qi.shape != (m, m):
                    errors.append(f"game.Q[{i}] must be {m}x{m}")
                elif not np.allclose(Qi, Qi.T, atol=1e-12):
                    errors.append(f"game.Q[{i}] must be symmetric")
            if len(game_cfg["q"]) != n_agents:
                errors.append("game.q needs one linear term per agent")
            if len(np.asarray(game_cfg["lower"]).ravel()) != m:
                errors.append("game.lower length must equal the decision dimension")
            if len(np.asarray(game_cfg["upper"]).ravel()) != m:
                errors.append("game.upper length must equal the decision dimension")

    elif kind == "unicycle":
        game_cfg = cfg.get("game", {})
        for key in (
            "sources",
            "coupling_weight",
            "coupling_bound",
            "x_min",
            "x_max",
            "y_min",
            "y_max",
        ):
            if key not in game_cfg:
                errors.append(f"missing field game.{key}")
        dyn = cfg.get("dynamics", {})
        for key in ("epsilon", "k1", "k2"):
            if key not in dyn:
                errors.append(f"missing field dynamics.{key}")
        if not errors:
            sources = np.asarray(game_cfg["sources"], dtype=float)
            n_agents = sources.shape[0]
            dims = (2,) * n_agents
            epsilon = float(dyn["epsilon"])
            try:
                plant = UnicycleParams(
                    K1=dyn["k1"],
                    K2=dyn["k2"],
                    sources=sources,
                    coupling_weight=float(game_cfg["coupling_weight"]),
                    coupling_bound=float(game_cfg["coupling_bound"]),
                    x_min=float(game_cfg["x_min"]),
                    x_max=float(game_cfg["x_max"]),
                    y_min=float(game_cfg["y_min"]),
                    y_max=float(game_cfg["y_max"]),
                )
            except ValueError as exc:
                errors.append(f"game/dynamics: {exc}")

    else:  # windfarm
        farm = cfg.get("farm", {})
        for key in (
            "rows",
            "cols",
            "spacing_x",
            "spacing_y",
            "rotor_radius",
            "wake_decay",
            "tau",
            "rho_air",
            "rotor_area",
            "free_stream",
            "a_min",
            "a_max",
            "row_bound",
        ):
            if key not in farm:
                errors.append(f"missing field farm.{key}")
        dyn = cfg.get("dynamics", {})
        if "epsilon" not in dyn:
            errors.append("missing field dynamics.epsilon")
        wind = cfg.get("wind", {})
        if "directions" not in wind:
            errors.append("missing field wind.directions")
        if not errors:
            epsilon = float(dyn["epsilon"])
            try:
                plant = WindFarmParams(
                    rows=int(farm["rows"]),
                    cols=int(farm["cols"]),
                    spacing_x=float(farm["spacing_x"]),
                    spacing_y=float(farm["spacing_y"]),
                    rotor_radius=float(farm["rotor_radius"]),
                    wake_decay=float(farm["wake_decay"]),
                    tau=float(farm["tau"]),
                    rho_air=float(farm["rho_air"]),
                    rotor_area=float(farm["rotor_area"]),
                    U_inf=float(farm["free_stream"]),
                    a_min=float(farm["a_min"]),
                    a_max=float(farm["a_max"]),
                    row_bound=float(farm["row_bound"]),
                    power_scale=float(farm.get("power_scale", 1.0)),
                )
            except ValueError as exc:
                errors.append(f"farm: {exc}")
            else:
                n_agents = plant.n_agents
                dims = (1,) * n_agents
                directions = [np.asarray(d, float) for d in wind["directions"]]
                changes = [float(t) for t in wind.get("change_times", [])]
                if len(changes) != len(directions) - 1:
                    errors.append(
                        "wind.change_times must have one entry fewer than "
                        "wind.directions"
                    )
                elif sorted(changes) != changes:
                    errors.append("wind.change_times must be increasing")
                else:
                    starts = [0.0] + changes
                    schedule = list(zip(starts, directions))

    dither = None
    estimator = None
    if not errors and n_agents is not None:
        mode = run["mode"]
        needs_dither = mode in ("static_zero_order", "dynamic_zero_order")
        dcfg = cfg.get("dither")
        if dcfg is None:
            if needs_dither:
                errors.append("missing section [dither] for a zero-order mode")
        else:
            dither = _build_dither(dcfg, n_agents, dims, errors)
        ecfg = cfg.get("estimator")
        if ecfg is None:
            if needs_dither:
                errors.append("missing section [estimator] for a zero-order mode")
        else:
            for key in ("gain", "rho", "sigma", "sigma0", "theta_bound"):
                if key not in ecfg:
                    errors.append(f"missing field estimator.{key}")
            estimator = ecfg
        if mode == "dynamic_zero_order" and plant is None:
            errors.append("dynamic mode requires a plant (unicycle or windfarm kind)")

    if errors:
        raise ValidationError(errors)

    steps = StepSizes(gamma=np.atleast_1d(np.asarray(gamma, float)), gamma0=gamma0)
    scenario = Scenario(
        name=name,
        kind=kind,
        steps=steps,
        dither=dither,
        estimator=estimator,
        plant=plant,
        epsilon=epsilon,
        run_defaults=run,
        init=cfg.get("init", {}),
        resolved=cfg,
        _schedule=schedule,
    )
    # Fail fast on inconsistent game sections.
    scenario.intervals(horizon=1.0)
    return scenario


def _build_dither(dcfg: dict, n_agents: int, dims, errors) -> DitherSpec | None:
    amplitude = dcfg.get("amplitude")
    if amplitude is None:
        errors.append("missing field dither.amplitude")
        return None
    amps = np.atleast_1d(np.asarray(amplitude, dtype=float))
    if amps.size == 1:
        amps = np.full(n_agents, float(amps[0]))
    if amps.size != n_agents:
        errors.append("dither.amplitude must be a scalar or one value per agent")
        return None
    k_omega = float(dcfg.get("k_omega", 1.0))
    if "base_frequencies" in dcfg:
        freqs = [np.asarray(w, dtype=float).ravel() for w in dcfg["base_frequencies"]]
        if len(freqs) != n_agents:
            errors.append("dither.base_frequencies needs one list per agent")
            return None
        for i, (w, m_i) in enumerate(zip(freqs, dims)):
            if w.size != m_i:
                errors.append(
                    f"dither.base_frequencies[{i}] needs {m_i} channel frequencies"
                )
                return None
    elif "frequency_range" in dcfg:
        lo, hi = (float(v) for v in dcfg["frequency_range"])
        seed = int(dcfg.get("frequency_seed", 0))
        rng = np.random.default_rng(seed)
        freqs = [np.sort(rng.uniform(lo, hi, size=m_i)) for m_i in dims]
    else:
        errors.append("dither needs base_frequencies or frequency_range")
        return None
    return DitherSpec(
        amplitudes=amps,
        base_frequencies=tuple(freqs),
        frequency_factor=k_omega,
    )
