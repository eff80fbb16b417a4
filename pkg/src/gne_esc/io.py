"""Plot-ready CSV emission and run manifests.

Trajectory CSVs come in two schemas selected by flag: a wide form with
one column per state component (t, u_1..u_m, lambda_1..lambda_q[, x_..])
and a long form with rows t,agent,var,value (agent -1 marks coordinator
and global variables). Floats are written with repr so reruns of a
deterministic config are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = [
    "write_trajectory_csv",
    "write_estimator_trace_csv",
    "write_message_trace_csv",
    "write_sweep_csv",
    "write_json",
]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_trajectory_csv(path, traj, game, wide: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    times = traj.times
    u = traj.column("u")
    lam = traj.column("lam")
    x = traj.column("x") if "x" in traj.layout else None
    lines = []
    if wide:
        header = ["t"]
        header += [f"u_{k + 1}" for k in range(u.shape[1])]
        header += [f"lambda_{k + 1}" for k in range(lam.shape[1])]
        if x is not None:
            header += [f"x_{k + 1}" for k in range(x.shape[1])]
        lines.append(",".join(header))
        for s in range(times.size):
            row = [times[s], *u[s], *lam[s]]
            if x is not None:
                row += [*x[s]]
            lines.append(",".join(_fmt(v) for v in row))
    else:
        lines.append("t,agent,var,value")
        offsets = np.concatenate([[0], np.cumsum(game.dims)])
        for s in range(times.size):
            t = times[s]
            for i in range(game.n_agents):
                for k in range(game.dims[i]):
                    lines.append(
                        f"{_fmt(t)},{i},u{k + 1},{_fmt(u[s, offsets[i] + k])}"
                    )
            for k in range(lam.shape[1]):
                lines.append(f"{_fmt(t)},-1,lambda{k + 1},{_fmt(lam[s, k])}")
            if x is not None:
                n_x = x.shape[1] // game.n_agents
                for i in range(game.n_agents):
                    for k in range(n_x):
                        lines.append(
                            f"{_fmt(t)},{i},x{k + 1},{_fmt(x[s, i * n_x + k])}"
                        )
    path.write_text("\n".join(lines) + "\n")
    return path


def write_estimator_trace_csv(path, traj, game, measured_fn) -> Path:
    """Per-agent estimator traces: theta_hat, Sigma eigenvalue range, e, eta.

    measured_fn(t, state_row) must return the per-agent measured outputs
    used by the estimator at that sample.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = game.n_agents
    theta = traj.column("theta")
    c = traj.column("c")
    sig = traj.column("Sigma")
    l_hat = traj.column("l_hat")
    eta = traj.column("eta_hat")
    p = theta.shape[1] // n
    lines = ["t,agent,var,value"]
    for s, t in enumerate(traj.times):
        y = measured_fn(float(t), traj.states[s])
        th = theta[s].reshape(n, p)
        cs = c[s].reshape(n, p)
        Sg = sig[s].reshape(n, p, p)
        eigs = np.linalg.eigvalsh(Sg)
        for i in range(n):
            for k in range(p):
                lines.append(f"{_fmt(t)},{i},theta{k},{_fmt(th[i, k])}")
                lines.append(f"{_fmt(t)},{i},c{k},{_fmt(cs[i, k])}")
            lines.append(f"{_fmt(t)},{i},sigma_min,{_fmt(eigs[i, 0])}")
            lines.append(f"{_fmt(t)},{i},sigma_max,{_fmt(eigs[i, -1])}")
            lines.append(f"{_fmt(t)},{i},e,{_fmt(y[i] - l_hat[s, i])}")
            lines.append(f"{_fmt(t)},{i},eta_hat,{_fmt(eta[s, i])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_message_trace_csv(path, traj, game, rhs) -> Path:
    """Agent/coordinator message log re-evaluated at the sampled states."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    offsets = np.concatenate([[0], np.cumsum(game.dims)])
    lines = ["t,sender,var,value"]
    m = game.m_total
    for s, t in enumerate(traj.times):
        ds = rhs(float(t), traj.states[s])
        u = traj.states[s][traj.layout["u"]]
        du = ds[:m]
        lam = traj.states[s][traj.layout["lam"]]
        for i in range(game.n_agents):
            for k in range(game.dims[i]):
                lines.append(f"{_fmt(t)},{i},u{k + 1},{_fmt(u[offsets[i] + k])}")
                lines.append(f"{_fmt(t)},{i},du{k + 1},{_fmt(du[offsets[i] + k])}")
        for k in range(lam.size):
            lines.append(f"{_fmt(t)},coordinator,lambda{k + 1},{_fmt(lam[k])}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_sweep_csv(path, rows, axis_names) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(axis_names) + [
        "dist_to_vgne",
        "entry_time",
        "max_violation",
        "status",
    ]
    lines = [",".join(header)]
    for row in rows:
        cells = [_fmt(row[name]) for name in axis_names]
        cells += [
            _fmt(row["dist_to_vgne"]),
            _fmt(row["entry_time"]),
            _fmt(row["max_violation"]),
            str(row["status"]).replace(",", ";"),
        ]
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def default(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        raise TypeError(f"not JSON serializable: {type(obj)!r}")

    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=default) + "\n")
    return path
