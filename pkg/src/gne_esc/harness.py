"""Fixed-step integration of the composed closed loop, metrics and sweeps.

One macro-step evaluates, in order: dither, agent decision updates (du),
coordinator dual update (dlam), estimator bank, plant dynamics. The
composed right-hand side is integrated with the classic fourth-order
scheme; per-step clamps (theta_hat into Theta, Sigma symmetrization)
repair the O(h^2) drift that discretization adds to the continuous-time
invariants.
"""

from __future__ import annotations

import itertools
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._version import __version__
from .controller import DitherSpec
from .full_info import StepSizes
from .game import GameSpec, pseudo_gradient
from .oracle import (
    ENUMERATION_LIMIT,
    OracleSolution,
    cached_vgne,
    scenario_hash,
    solve_extragradient,
    solve_quadratic_kkt,
)
from .plants import PlantState, _plant_f, cost_output, farm_power
from .scenarios import Interval, Scenario

__all__ = [
    "RunConfig",
    "SweepGrid",
    "SweepResult",
    "Trajectory",
    "ClosedLoop",
    "integrate",
    "build_closed_loop",
    "run_scenario",
    "run_metrics",
    "sweep",
    "RunResult",
]


@dataclass(frozen=True)
class RunConfig:
    """Integration parameters of one run."""

    step: float
    horizon: float
    sample_stride: int = 10
    seed: int = 0
    mode: str = "full_info"

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step size must be positive")
        if self.horizon < self.step:
            raise ValueError("horizon must cover at least one step")
        if self.sample_stride < 1:
            raise ValueError("sample stride must be at least 1")
        if self.mode not in ("full_info", "static_zero_order", "dynamic_zero_order"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class Trajectory:
    """Sampled solution of one integration run."""

    times: np.ndarray
    states: np.ndarray
    layout: dict
    status: str = "ok"

    def column(self, name: str) -> np.ndarray:
        sl = self.layout[name]
        return self.states[:, sl]


def integrate(system_rhs, state0, cfg: RunConfig, *, post_step=None, guard=None,
              t0: float = 0.0) -> Trajectory:
    """Classic fourth-order fixed-step integration with per-step clamps.

    Aborts on non-finite states (keeping the last finite sample) and
    flags compact-domain exits reported by the optional guard.
    """
    s = np.asarray(state0, dtype=float).copy()
    if not np.all(np.isfinite(system_rhs(t0, s))):
        raise ValueError("right-hand side not finite at the initial state")
    h = cfg.step
    n_steps = int(round(cfg.horizon / h))
    stride = cfg.sample_stride
    times = [t0]
    samples = [s.copy()]
    status = "ok"
    t = t0
    for k in range(n_steps):
        k1 = system_rhs(t, s)
        k2 = system_rhs(t + 0.5 * h, s + (0.5 * h) * k1)
        k3 = system_rhs(t + 0.5 * h, s + (0.5 * h) * k2)
        k4 = system_rhs(t + h, s + h * k3)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (k + 1) * h
        if post_step is not None:
            post_step(s)
        if not np.all(np.isfinite(s)):
            status = "non_finite"
            break
        if (k + 1) % stride == 0 or k + 1 == n_steps:
            if guard is not None and not guard(s):
                status = "domain_exit"
                times.append(t)
                samples.append(s.copy())
                break
            times.append(t)
            samples.append(s.copy())
    return Trajectory(np.asarray(times), np.asarray(samples), {}, status)


# ---------------------------------------------------------------------------
# Closed-loop composition
# ---------------------------------------------------------------------------


@dataclass
class ClosedLoop:
    rhs: callable
    state0: np.ndarray
    layout: dict
    post_step: callable | None
    guard: callable | None
    scenario: Scenario
    intervals: list[Interval]
    dither: DitherSpec | None
    steps: StepSizes
    epsilon: float | None
    mode: str

    def interval_at(self, t: float) -> Interval:
        for iv in reversed(self.intervals):
            if t >= iv.t_start:
                return iv
        return self.intervals[0]


def _estimator_bank(scenario: Scenario, game: GameSpec):
    """Stacked per-agent estimator parameters (uniform decision dims)."""
    dims = set(game.dims)
    if len(dims) > 1:
        raise NotImplementedError(
            "the batched closed loop requires uniform per-agent decision dims"
        )
    tunings = scenario.estimator_tunings(game)
    K = np.array([t.K for t in tunings])
    rho = np.array([t.rho for t in tunings])
    sigma = np.array([t.sigma for t in tunings])
    theta_lo = np.stack([t.Theta.lower for t in tunings])
    theta_hi = np.stack([t.Theta.upper for t in tunings])
    Sigma0 = np.stack([t.Sigma0 for t in tunings])
    return K, rho, sigma, theta_lo, theta_hi, Sigma0


def build_closed_loop(
    scenario: Scenario,
    cfg: RunConfig,
    *,
    amplitude=None,
    k_omega=None,
    epsilon=None,
    theta_source: str = "estimator",
) -> ClosedLoop:
    """Compose the configured closed loop into one flat-state RHS.

    theta_source='oracle' substitutes the exact pseudo-gradient for the
    estimator output inside the zero-order law (testing reduction to the
    full-information flow); the estimator states still evolve but do not
    feed back.
    """
    intervals = scenario.intervals(cfg.horizon)
    game0 = intervals[0].game
    steps = scenario.steps
    n = game0.n_agents
    m = game0.m_total
    q = game0.n_coupling

    dither = scenario.dither
    if cfg.mode == "full_info":
        dither = None
    else:
        if dither is None:
            raise ValueError("zero-order modes need a dither spec")
        if amplitude is not None:
            amps = np.atleast_1d(np.asarray(amplitude, dtype=float))
            if amps.size == 1:
                amps = np.full(n, float(amps[0]))
            dither = replace(dither, amplitudes=amps)
        if k_omega is not None:
            dither = replace(dither, frequency_factor=float(k_omega))

    eps = float(epsilon) if epsilon is not None else scenario.epsilon
    if cfg.mode == "dynamic_zero_order":
        if scenario.plant is None:
            raise ValueError("dynamic mode needs a plant")
        if cfg.step > eps / 10.0:
            warnings.warn(
                f"step {cfg.step} exceeds epsilon/10 = {eps / 10.0:g}; the fast "
                "subsystem may be under-resolved",
                stacklevel=2,
            )
    if cfg.mode != "full_info" and scenario.estimator is not None:
        stiff = max(float(scenario.estimator["gain"]), 2.0 * float(scenario.estimator["rho"]))
        if cfg.step * stiff > 2.5:
            warnings.warn(
                f"step {cfg.step} is large for estimator rates (K, 2*rho) up to "
                f"{stiff:g}; explicit integration may go unstable",
                stacklevel=2,
            )

    layout = {"u": slice(0, m), "lam": slice(m, m + q)}
    offset = m + q
    u0 = scenario.initial_decision(game0)
    lam0 = np.zeros(q)
    pieces = [u0, lam0]

    gamma_vec = steps.expand(game0)
    A = game0.coupling_A
    AT = A.T
    b = game0.coupling_b
    gamma0 = steps.gamma0
    boxes_lo = np.concatenate([s.lower for s in game0.local_sets])
    boxes_hi = np.concatenate([s.upper for s in game0.local_sets])
    all_boxes = all(hasattr(s, "lower") for s in game0.local_sets)

    def project_local(v):
        if all_boxes:
            return np.clip(v, boxes_lo, boxes_hi)
        return game0.project_local(v)

    single_interval = len(intervals) == 1

    def interval_at(t):
        if single_interval:
            return intervals[0]
        active = intervals[0]
        for iv in intervals[1:]:
            if t >= iv.t_start:
                active = iv
        return active

    if dither is not None:
        amp_ch, omega_ch, phase_ch = dither.stacked_arrays()

    zero_m = np.zeros(m)

    # Estimator bank state (zero-order modes only).
    if cfg.mode != "full_info":
        K_bank, rho_bank, sigma_bank, th_lo, th_hi, Sigma0 = _estimator_bank(
            scenario, game0
        )
        p = th_lo.shape[1]
        layout["l_hat"] = slice(offset, offset + n)
        layout["eta_hat"] = slice(offset + n, offset + 2 * n)
        layout["theta"] = slice(offset + 2 * n, offset + 2 * n + n * p)
        layout["c"] = slice(offset + 2 * n + n * p, offset + 2 * n + 2 * n * p)
        layout["Sigma"] = slice(
            offset + 2 * n + 2 * n * p, offset + 2 * n + 2 * n * p + n * p * p
        )
        offset = layout["Sigma"].stop
        eye_p = np.eye(p)

    # Plant state (dynamic mode only).
    plant = scenario.plant
    if cfg.mode == "dynamic_zero_order":
        x0 = scenario.initial_plant_state(game0, u0)
        layout["x"] = slice(offset, offset + x0.size)
        offset += x0.size

    def measured_outputs(t, u, x):
        if cfg.mode == "dynamic_zero_order":
            iv = interval_at(t)
            return cost_output(plant, PlantState(x, eps), iv.wake)
        iv = interval_at(t)
        return iv.game.eval_costs(u)

    if cfg.mode != "full_info":
        y0 = measured_outputs(0.0, u0, None if plant is None else
                              scenario.initial_plant_state(game0, u0))
        pieces.extend(
            [
                y0,                       # l_hat starts at the first measurement
                np.zeros(n),              # eta_hat
                np.zeros(n * p),          # theta_hat
                np.zeros(n * p),          # c
                Sigma0.ravel(),
            ]
        )
    if cfg.mode == "dynamic_zero_order":
        pieces.append(x0)

    state0 = np.concatenate(pieces)

    def gradient_drive(t, u):
        iv = interval_at(t)
        if iv.quad is not None:
            return iv.quad.M @ u + iv.quad.c0
        return pseudo_gradient(iv.game, u)

    def rhs(t, s):
        u = s[layout["u"]]
        lam = s[layout["lam"]]
        d = amp_ch * np.sin(omega_ch * t + phase_ch) if dither is not None else zero_m

        if cfg.mode == "full_info":
            drive = gradient_drive(t, u)
        elif theta_source == "oracle":
            drive = gradient_drive(t, u)
        else:
            theta = s[layout["theta"]].reshape(n, p)
            drive = theta[:, 1:].reshape(m)

        du = -u + project_local(u - gamma_vec * (drive + AT @ lam) + d)
        dlam = -lam + np.maximum(lam + gamma0 * (A @ u - b + 2.0 * (A @ du)), 0.0)

        if cfg.mode == "full_info":
            return np.concatenate([du, dlam])

        l_hat = s[layout["l_hat"]]
        eta_hat = s[layout["eta_hat"]]
        theta = s[layout["theta"]].reshape(n, p)
        c = s[layout["c"]].reshape(n, p)
        Sigma = s[layout["Sigma"]].reshape(n, p, p)
        x = s[layout["x"]] if cfg.mode == "dynamic_zero_order" else None

        y = measured_outputs(t, u, x)
        e = y - l_hat
        regressor = np.concatenate(
            [np.ones((n, 1)), du.reshape(n, p - 1)], axis=1
        )
        raw = np.linalg.solve(
            Sigma,
            (c * (e - eta_hat)[:, None] - sigma_bank[:, None] * theta)[..., None],
        )[..., 0]
        # Tangent cone of the Theta boxes: zero outward components.
        blocked = ((theta <= th_lo + 1e-9) & (raw < 0.0)) | (
            (theta >= th_hi - 1e-9) & (raw > 0.0)
        )
        d_theta = np.where(blocked, 0.0, raw)
        d_l = (
            np.einsum("np,np->n", regressor, theta)
            + K_bank * e
            + np.einsum("np,np->n", c, d_theta)
        )
        d_c = -K_bank[:, None] * c + regressor
        d_eta = -K_bank * eta_hat
        d_Sigma = (
            np.einsum("ni,nj->nij", c, c)
            - rho_bank[:, None, None] * Sigma
            + sigma_bank[:, None, None] * eye_p
        )
        parts = [du, dlam, d_l, d_eta, d_theta.ravel(), d_c.ravel(), d_Sigma.ravel()]
        if cfg.mode == "dynamic_zero_order":
            parts.append(_plant_f(plant, x, u) / eps)
        return np.concatenate(parts)

    post_step = None
    if cfg.mode != "full_info":

        def post_step(s):
            theta = s[layout["theta"]].reshape(n, p)
            np.clip(theta, th_lo, th_hi, out=theta)
            Sigma = s[layout["Sigma"]].reshape(n, p, p)
            sym = 0.5 * (Sigma + np.transpose(Sigma, (0, 2, 1)))
            Sigma[...] = sym

    guard = None
    if cfg.mode == "dynamic_zero_order":

        def guard(s):
            return plant.state_domain_ok(s[layout["x"]])

    return ClosedLoop(
        rhs=rhs,
        state0=state0,
        layout=layout,
        post_step=post_step,
        guard=guard,
        scenario=scenario,
        intervals=intervals,
        dither=dither,
        steps=steps,
        epsilon=eps,
        mode=cfg.mode,
    )


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class SweepResult:
    """Per-run verdict: distance to the v-GNE, entry time, violations."""

    dist_to_vgne: float
    dist_per_agent: np.ndarray
    entry_time: float
    max_violation: float
    status: str
    tail_mean_u: np.ndarray = field(repr=False, default=None)


def run_metrics(
    traj: Trajectory,
    u_star: np.ndarray,
    eps_ball: float,
    game: GameSpec,
    sustain_time: float = 0.0,
    window: tuple[float, float] | None = None,
    tail_frac: float = 0.1,
) -> SweepResult:
    """Distance of the tail-averaged decisions to u*, sustained-entry time
    into {u*} + eps_ball B, and the maximum coupling violation in the tail.

    Sustained entry requires the trajectory to stay in the ball for
    sustain_time (one slowest-dither period) so transient crossings do not
    count as convergence; entry_time is inf when that never happens.
    """
    u_star = np.asarray(u_star, dtype=float)
    times = traj.times
    u_traj = traj.column("u")
    if window is None:
        window = (float(times[0]), float(times[-1]))
    t0, t1 = window
    mask = (times >= t0) & (times <= t1)
    times_w = times[mask]
    u_w = u_traj[mask]
    if times_w.size == 0:
        raise ValueError("metrics window contains no samples")
    tail_start = t1 - tail_frac * (t1 - t0)
    tail = times_w >= tail_start
    tail_mean = u_w[tail].mean(axis=0)
    dist_collective = float(np.linalg.norm(tail_mean - u_star))
    dists = np.array(
        [
            np.linalg.norm(tail_mean[game.block(i)] - u_star[game.block(i)])
            for i in range(game.n_agents)
        ]
    )
    inside = np.linalg.norm(u_w - u_star[None, :], axis=1) <= eps_ball
    entry_time = float("inf")
    for k in range(inside.size):
        if not inside[k]:
            continue
        t_end = times_w[k] + sustain_time
        if t_end > t1 + 1e-12:
            break
        horizon_mask = (times_w >= times_w[k]) & (times_w <= t_end)
        if np.all(inside[horizon_mask]):
            entry_time = float(times_w[k] - t0)
            break
    slack = u_w[tail] @ game.coupling_A.T - game.coupling_b[None, :]
    max_violation = float(np.maximum(slack, 0.0).max()) if slack.size else 0.0
    status = traj.status if traj.status != "ok" else (
        "ok" if np.isfinite(entry_time) else "did_not_converge"
    )
    return SweepResult(
        dist_to_vgne=dist_collective,
        dist_per_agent=dists,
        entry_time=entry_time,
        max_violation=max_violation,
        status=status,
        tail_mean_u=tail_mean,
    )


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    trajectory: Trajectory
    metrics: dict
    manifest: dict
    closed_loop: ClosedLoop
    cfg: RunConfig
    oracles: list[OracleSolution]


def solve_interval_oracle(
    scenario: Scenario,
    interval: Interval,
    cache_path=None,
    tol: float = 1e-8,
) -> OracleSolution:
    """Ground-truth v-GNE of one interval's game, cached per scenario hash."""
    payload = {
        "kind": scenario.kind,
        "label": interval.label,
        "game": scenario.resolved.get("game"),
        "farm": scenario.resolved.get("farm"),
        "wind": scenario.resolved.get("wind"),
    }
    key = scenario_hash(payload)

    def solver():
        quad = interval.quad
        n_rows = interval.game.n_coupling + 2 * interval.game.m_total
        if quad is not None and 2**n_rows <= ENUMERATION_LIMIT:
            return solve_quadratic_kkt(quad)
        game = interval.game
        if scenario.kind == "windfarm":
            u0 = np.full(game.m_total, scenario.plant.a_max)
        else:
            u0 = game.project_local(np.zeros(game.m_total))
        return solve_extragradient(game, tol=tol, u0=u0)

    return cached_vgne(key, cache_path, solver)


def make_run_config(scenario: Scenario, **overrides) -> RunConfig:
    base = dict(scenario.run_defaults)
    for key in ("mode", "step", "horizon", "sample_stride", "seed"):
        if overrides.get(key) is not None:
            base[key] = overrides[key]
    return RunConfig(
        step=float(base["step"]),
        horizon=float(base["horizon"]),
        sample_stride=int(base["sample_stride"]),
        seed=int(base["seed"]),
        mode=str(base["mode"]),
    )


def resolved_with_overrides(scenario: Scenario, cfg: RunConfig, **overrides) -> dict:
    """Scenario config dict with run-time overrides folded back in."""
    import copy as _copy

    resolved = _copy.deepcopy(scenario.resolved)
    resolved["run"] = {
        "mode": cfg.mode,
        "step": cfg.step,
        "horizon": cfg.horizon,
        "sample_stride": cfg.sample_stride,
        "seed": cfg.seed,
    }
    if overrides.get("amplitude") is not None:
        resolved.setdefault("dither", {})["amplitude"] = overrides["amplitude"]
    if overrides.get("k_omega") is not None:
        resolved.setdefault("dither", {})["k_omega"] = overrides["k_omega"]
    if overrides.get("epsilon") is not None:
        resolved.setdefault("dynamics", {})["epsilon"] = overrides["epsilon"]
    return resolved


def run_scenario(
    scenario: Scenario,
    cfg: RunConfig | None = None,
    *,
    amplitude=None,
    k_omega=None,
    epsilon=None,
    theta_source: str = "estimator",
    oracle_cache=None,
    eps_ball: float = 1.5,
    oracle_tol: float = 1e-8,
    **cfg_overrides,
) -> RunResult:
    """Integrate one configured run and score it against the oracle."""
    if cfg is None:
        cfg = make_run_config(scenario, **cfg_overrides)
    loop = build_closed_loop(
        scenario,
        cfg,
        amplitude=amplitude,
        k_omega=k_omega,
        epsilon=epsilon,
        theta_source=theta_source,
    )
    traj = integrate(
        loop.rhs, loop.state0, cfg, post_step=loop.post_step, guard=loop.guard
    )
    traj.layout = loop.layout
    sustain = loop.dither.slowest_period() if loop.dither is not None else 0.0
    oracles = []
    per_interval = []
    for iv in loop.intervals:
        sol = solve_interval_oracle(scenario, iv, oracle_cache, tol=oracle_tol)
        oracles.append(sol)
        window = (iv.t_start, min(iv.t_end, float(traj.times[-1])))
        metrics = run_metrics(
            traj, sol.u_star, eps_ball, iv.game, sustain_time=sustain, window=window
        )
        entry = {
            "label": iv.label,
            "window": list(window),
            "dist_to_vgne": metrics.dist_to_vgne,
            "dist_per_agent": metrics.dist_per_agent.tolist(),
            "entry_time": metrics.entry_time,
            "max_violation": metrics.max_violation,
            "status": metrics.status,
            "oracle_residual": sol.residual,
        }
        if scenario.kind == "windfarm":
            entry.update(
                _windfarm_power_metrics(scenario, loop, traj, iv, sol, window)
            )
        per_interval.append(entry)
    final = per_interval[-1]
    metrics_dict = {
        "status": traj.status,
        "intervals": per_interval,
        "dist_to_vgne": final["dist_to_vgne"],
        "entry_time": final["entry_time"],
        "max_violation": final["max_violation"],
    }
    if scenario.kind == "windfarm":
        metrics_dict["final_power"] = final.get("power_algorithm")
    manifest = {
        "version": __version__,
        "scenario": resolved_with_overrides(
            scenario, cfg, amplitude=amplitude, k_omega=k_omega, epsilon=epsilon
        ),
        "theta_source": theta_source,
        "eps_ball": eps_ball,
    }
    return RunResult(traj, metrics_dict, manifest, loop, cfg, oracles)


def _windfarm_power_metrics(scenario, loop, traj, interval, sol, window):
    params = scenario.plant
    t0, t1 = window
    mask = (traj.times >= t0) & (traj.times <= t1)
    times_w = traj.times[mask]
    tail = times_w >= t1 - 0.1 * (t1 - t0)
    if loop.mode == "dynamic_zero_order":
        a_traj = traj.column("x")[mask]
    else:
        a_traj = traj.column("u")[mask]
    powers = np.array(
        [farm_power(params, a, interval.wake) for a in a_traj[tail]]
    )
    greedy = np.full(params.n_agents, params.a_max)
    return {
        "power_algorithm": float(powers.mean()),
        "power_greedy": farm_power(params, greedy, interval.wake),
        "power_oracle": farm_power(params, sol.u_star, interval.wake),
    }


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepGrid:
    """Named axes of run overrides, swept as a Cartesian product."""

    axes: dict

    def __post_init__(self):
        if not self.axes:
            raise ValueError("sweep grid needs at least one axis")
        known = {"amplitude", "k_omega", "epsilon", "step", "horizon", "seed"}
        unknown = set(self.axes) - known
        if unknown:
            raise ValueError(f"unknown sweep axes: {sorted(unknown)}")

    def cells(self) -> list[dict]:
        names = list(self.axes)
        return [
            dict(zip(names, combo))
            for combo in itertools.product(*(self.axes[n] for n in names))
        ]


def sweep_workers() -> int:
    cap = os.environ.get("GNE_ESC_THREADS")
    if cap is not None:
        return max(1, int(cap))
    return min(4, os.cpu_count() or 1)


def sweep(
    grid: SweepGrid,
    scenario: Scenario,
    base_cfg: RunConfig | None = None,
    *,
    eps_ball: float = 1.5,
    oracle_cache=None,
) -> list[dict]:
    """Run every grid cell; per-cell failures are recorded, not raised."""
    cells = grid.cells()

    def one(cell):
        overrides = dict(cell)
        try:
            cfg = make_run_config(
                scenario,
                mode=base_cfg.mode if base_cfg else None,
                step=overrides.pop("step", base_cfg.step if base_cfg else None),
                horizon=overrides.pop(
                    "horizon", base_cfg.horizon if base_cfg else None
                ),
                seed=overrides.pop("seed", base_cfg.seed if base_cfg else None),
                sample_stride=base_cfg.sample_stride if base_cfg else None,
            )
            result = run_scenario(
                scenario,
                cfg,
                amplitude=overrides.get("amplitude"),
                k_omega=overrides.get("k_omega"),
                epsilon=overrides.get("epsilon"),
                eps_ball=eps_ball,
                oracle_cache=oracle_cache,
            )
            row = dict(cell)
            row.update(
                dist_to_vgne=result.metrics["dist_to_vgne"],
                entry_time=result.metrics["entry_time"],
                max_violation=result.metrics["max_violation"],
                status=result.metrics["status"],
            )
            return row
        except Exception as exc:  # sweep robustness: record and continue
            row = dict(cell)
            row.update(
                dist_to_vgne=float("nan"),
                entry_time=float("nan"),
                max_violation=float("nan"),
                status=f"failed: {exc}",
            )
            return row

    workers = sweep_workers()
    if workers == 1 or len(cells) == 1:
        rows = [one(cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, cells))
    return rows
