"""Command-line entry point: run / sweep / verify on scenario files.

Exit codes: 0 ok, 1 runtime failure (stage named on stderr), 2 validation
failure (every offending field listed).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ._version import __version__
from .estimator import pe_metric
from .full_info import PrimalDualState, lemma1_probe, preconditioner, step_size_certificate
from .game import estimate_monotonicity
from .harness import (
    RunConfig,
    SweepGrid,
    build_closed_loop,
    integrate,
    make_run_config,
    run_scenario,
    solve_interval_oracle,
    sweep,
)
from .io import (
    write_estimator_trace_csv,
    write_json,
    write_message_trace_csv,
    write_sweep_csv,
    write_trajectory_csv,
)
from .plants import steady_state_residual
from .scenarios import ValidationError, load_scenario

__all__ = ["main", "cmd_run", "cmd_sweep", "cmd_verify"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gne-esc",
        description="GNE learning via projected flows and extremum seeking",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario TOML path or bundled name")
        p.add_argument("--mode", choices=["full_info", "static_zero_order", "dynamic_zero_order"])
        p.add_argument("--step", type=float, help="integrator step size")
        p.add_argument("--horizon", type=float, help="simulation horizon")
        p.add_argument("--amplitude", type=float, help="dither amplitude override")
        p.add_argument("--k-omega", type=float, dest="k_omega", help="dither frequency factor")
        p.add_argument("--epsilon", type=float, help="time-scale separation override")
        p.add_argument("--seed", type=int, help="seed for randomized initial conditions")
        p.add_argument("--out-dir", type=Path, default=Path("out"), help="artifact directory")
        p.add_argument("--eps-ball", type=float, default=1.5, help="entry-ball radius for metrics")

    p_run = sub.add_parser("run", help="execute one run and write its artifacts")
    common(p_run)
    p_run.add_argument("--wide", action="store_true", help="wide-form trajectory CSV")
    p_run.add_argument("--trace-estimator", action="store_true")
    p_run.add_argument("--trace-messages", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run a grid of parameter overrides")
    common(p_sweep)
    p_sweep.add_argument("grid", help="grid TOML file with an [axes] table")

    p_verify = sub.add_parser("verify", help="run the diagnostic probe suite")
    common(p_verify)
    return parser


def _load(scenario_arg: str):
    try:
        return load_scenario(scenario_arg)
    except ValidationError:
        raise
    except FileNotFoundError as exc:
        raise ValidationError([str(exc)]) from exc


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    stage = "setup"
    try:
        cfg = make_run_config(
            scenario,
            mode=args.mode,
            step=args.step,
            horizon=args.horizon,
            seed=args.seed,
        )
        stage = "integrate"
        started = time.perf_counter()
        result = run_scenario(
            scenario,
            cfg,
            amplitude=args.amplitude,
            k_omega=args.k_omega,
            epsilon=args.epsilon,
            eps_ball=args.eps_ball,
            oracle_cache=args.out_dir / "vgne_cache.json",
        )
        elapsed = time.perf_counter() - started
        stage = "artifacts"
        out = args.out_dir
        base = scenario.name
        game = result.closed_loop.intervals[0].game
        traj_path = write_trajectory_csv(
            out / f"{base}_trajectory.csv", result.trajectory, game, wide=args.wide
        )
        metrics = dict(result.metrics)
        metrics["runtime_seconds"] = elapsed
        write_json(out / f"{base}_metrics.json", metrics)
        write_json(out / f"{base}_manifest.json", result.manifest)
        if args.trace_estimator and cfg.mode != "full_info":
            loop = result.closed_loop

            def measured(t, state):
                iv = loop.interval_at(t)
                if cfg.mode == "dynamic_zero_order":
                    from .plants import PlantState, cost_output

                    return cost_output(
                        loop.scenario.plant,
                        PlantState(state[loop.layout["x"]], loop.epsilon),
                        iv.wake,
                    )
                return iv.game.eval_costs(state[loop.layout["u"]])

            write_estimator_trace_csv(
                out / f"{base}_estimator_trace.csv", result.trajectory, game, measured
            )
        if args.trace_messages:
            write_message_trace_csv(
                out / f"{base}_message_trace.csv",
                result.trajectory,
                game,
                result.closed_loop.rhs,
            )
        if result.trajectory.status != "ok":
            print(f"run failed during integration: {result.trajectory.status}", file=sys.stderr)
            return 1
        print(f"run ok: {traj_path}")
        print(
            f"  dist_to_vgne={metrics['dist_to_vgne']:.6g} "
            f"entry_time={metrics['entry_time']:.6g} "
            f"max_violation={metrics['max_violation']:.6g} "
            f"runtime={elapsed:.1f}s"
        )
        return 0
    except ValidationError:
        raise
    except Exception as exc:
        print(f"runtime failure during {stage}: {exc}", file=sys.stderr)
        return 1


def cmd_sweep(args) -> int:
    scenario = _load(args.scenario)
    stage = "grid"
    try:
        with open(args.grid, "rb") as fh:
            grid_cfg = tomllib.load(fh)
        axes = grid_cfg.get("axes")
        if not axes:
            raise ValidationError(["grid file needs a non-empty [axes] table"])
        grid = SweepGrid(axes=axes)
        stage = "sweep"
        base_cfg = make_run_config(
            scenario, mode=args.mode, step=args.step, horizon=args.horizon, seed=args.seed
        )
        rows = sweep(
            grid,
            scenario,
            base_cfg,
            eps_ball=args.eps_ball,
            oracle_cache=args.out_dir / "vgne_cache.json",
        )
        stage = "artifacts"
        axis_names = list(axes)
        csv_path = write_sweep_csv(
            args.out_dir / f"{scenario.name}_sweep.csv", rows, axis_names
        )
        marginals = {}
        for name in axis_names:
            marginals[name] = {}
            for value in axes[name]:
                hits = [r for r in rows if r[name] == value and r["status"] in ("ok", "did_not_converge")]
                if hits:
                    marginals[name][str(value)] = {
                        "dist_to_vgne_mean": float(np.mean([r["dist_to_vgne"] for r in hits])),
                        "entry_time_mean": float(np.mean([r["entry_time"] for r in hits])),
                    }
        write_json(args.out_dir / f"{scenario.name}_sweep_marginals.json", marginals)
        failed = [r for r in rows if str(r["status"]).startswith("failed")]
        print(f"sweep ok: {csv_path} ({len(rows)} cells, {len(failed)} failed)")
        return 0
    except ValidationError:
        raise
    except FileNotFoundError as exc:
        raise ValidationError([str(exc)]) from exc
    except Exception as exc:
        print(f"runtime failure during {stage}: {exc}", file=sys.stderr)
        return 1


def _print_check(name: str, status: str, detail: str = ""):
    print(f"  [{status.upper():>4}] {name}" + (f": {detail}" if detail else ""))


def cmd_verify(args) -> int:
    scenario = _load(args.scenario)
    rng = np.random.default_rng(scenario.run_defaults.get("seed", 0))
    interval = scenario.intervals(horizon=float("inf"))[0]
    game = interval.game
    rows = []

    def sample_local(n):
        out = np.empty((n, game.m_total))
        for k in range(n):
            vec = []
            for i, s in enumerate(game.local_sets):
                lo = np.where(np.isfinite(s.lower), s.lower, -10.0)
                hi = np.where(np.isfinite(s.upper), s.upper, 10.0)
                vec.append(rng.uniform(lo, hi))
            out[k] = np.concatenate(vec)
        return out

    pts = sample_local(200)
    pairs = list(zip(pts[:100], pts[100:]))
    mu_hat, ell_hat = estimate_monotonicity(game, pairs)
    rows.append(
        (
            "monotonicity probe",
            "pass" if mu_hat > 0 else "warn",
            f"mu_hat={mu_hat:.4g} ell_hat={ell_hat:.4g}",
        )
    )

    try:
        report = step_size_certificate(game, scenario.steps, mu_hat, ell_hat, empirical=True)
        rows.append(
            (
                "step-size certificate",
                "pass" if report.passed else "fail",
                f"beta*sigma_min={report.beta * report.sigma_min:.4g} "
                f"sigma_max^2={report.sigma_max ** 2:.4g}",
            )
        )
        preconditioner(game, scenario.steps)
        rows.append(("matrix identity", "pass", "Gamma_blk^-1 - Ahat = Phi + Psi"))
    except ValueError as exc:
        rows.append(("step-size certificate", "fail", str(exc)))
        rows.append(("matrix identity", "fail", "preconditioner rejected the step sizes"))

    if scenario.plant is not None:
        residuals = [steady_state_residual(scenario.plant, u) for u in sample_local(20)]
        worst = max(residuals)
        rows.append(
            (
                "steady-state residual",
                "pass" if worst < 1e-10 else "fail",
                f"max over 20 random feasible u: {worst:.3e}",
            )
        )
    else:
        rows.append(("steady-state residual", "n/a", "static scenario"))

    if scenario.dither is not None:
        period = scenario.dither.slowest_period()
        stiff = max(
            float(scenario.estimator["gain"]), 2.0 * float(scenario.estimator["rho"])
        )
        step = min(scenario.run_defaults.get("step", 0.01), 0.01, 2.0 / stiff)
        stride = 2
        # align the horizon with the sampling stride so pe_metric sees a
        # uniform grid
        chunk = stride * step
        pilot_T = np.ceil(max(5.0 * period, 10.0) / chunk) * chunk
        cfg = RunConfig(
            step=step,
            horizon=pilot_T,
            sample_stride=stride,
            mode="static_zero_order",
        )
        loop = build_closed_loop(scenario, cfg)
        traj = integrate(loop.rhs, loop.state0, cfg, post_step=loop.post_step)
        traj.layout = loop.layout
        n = game.n_agents
        c_traj = traj.column("c")
        p = c_traj.shape[1] // n
        alphas = []
        for i in range(n):
            alphas.append(
                pe_metric(traj.times, c_traj[:, i * p : (i + 1) * p], window_T=max(period, 1.0))
            )
        alpha_min = min(alphas)
        rows.append(
            (
                "persistence of excitation",
                "pass" if alpha_min > 1e-10 else "warn",
                f"min windowed Gram eigenvalue alpha={alpha_min:.3e}",
            )
        )
    else:
        rows.append(("persistence of excitation", "n/a", "no dither configured"))

    try:
        sol = solve_interval_oracle(scenario, interval, args.out_dir / "vgne_cache.json")
        fixed = PrimalDualState(sol.u_star, sol.lambda_star)
        slacks = []
        for u in sample_local(50):
            lam = rng.uniform(0.0, 1.0, size=game.n_coupling) * (
                1.0 + np.abs(sol.lambda_star)
            )
            slacks.append(lemma1_probe(game, scenario.steps, PrimalDualState(u, lam), fixed))
        worst = min(slacks)
        rows.append(
            (
                "resolvent inequality probe",
                "pass" if worst >= -1e-9 else "fail",
                f"min slack over 50 points: {worst:.3e}",
            )
        )
    except Exception as exc:
        rows.append(("resolvent inequality probe", "fail", f"oracle/probe error: {exc}"))

    print(f"verify report for scenario '{scenario.name}':")
    for name, status, detail in rows:
        _print_check(name, status, detail)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "verify":
            return cmd_verify(args)
    except ValidationError as exc:
        print("validation failed:", file=sys.stderr)
        for line in exc.errors:
            print(f"  - {line}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
