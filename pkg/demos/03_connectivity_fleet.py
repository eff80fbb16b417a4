"""Connectivity control: four unicycles learn a constrained deployment.

Each vehicle seeks its own signal source while a connectivity penalty and
pairwise setpoint-difference limits keep the fleet together; vehicles are
driven by setpoint regulators, so the learning loop only sees measured
signal strengths at the physical positions. The script runs the
singularly perturbed closed loop, then reports per-agent distances to the
independently computed v-GNE and which decision variables saturate.

Run:  python demos/03_connectivity_fleet.py  (about two minutes)
"""

from pathlib import Path

import numpy as np

from gne_esc import run_scenario
from gne_esc.io import write_trajectory_csv
from gne_esc.scenarios import load_scenario

scenario = load_scenario("connectivity")
print("Table-style fleet parameters:")
print(f"  sources: {scenario.plant.sources.tolist()}")
print(f"  rectangle: [{scenario.plant.x_min}, {scenario.plant.x_max}] x "
      f"[{scenario.plant.y_min}, {scenario.plant.y_max}], b = {scenario.plant.coupling_bound}")

res = run_scenario(scenario, horizon=3000.0, eps_ball=1.5)
metrics = res.metrics["intervals"][0]
sol_u = None

traj = res.trajectory
tail = traj.times >= 0.9 * traj.times[-1]
tail_u = traj.column("u")[tail].mean(axis=0).reshape(4, 2)
positions = traj.column("x")[-1].reshape(4, 3)[:, :2]

print(f"\nrun status: {res.metrics['status']}, entry into the 1.5-ball at "
      f"t = {metrics['entry_time']:.0f}")
print(f"{'agent':>6} {'tail u':>22} {'final position':>22} {'dist to v-GNE':>14}")
for i in range(4):
    print(
        f"{i + 1:>6} ({tail_u[i, 0]:8.3f}, {tail_u[i, 1]:7.3f}) "
        f"({positions[i, 0]:8.3f}, {positions[i, 1]:7.3f}) "
        f"{metrics['dist_per_agent'][i]:14.3f}"
    )
print(f"max coupling violation in the tail: {metrics['max_violation']:.4f}")

saturated = [
    i + 1
    for i in range(4)
    if min(abs(tail_u[i, 1] - 6.0), abs(tail_u[i, 1] + 6.0)) < 0.5
    or min(abs(tail_u[i, 0] - 16.0), abs(tail_u[i, 0] + 16.0)) < 0.5
]
print(f"agents with saturated decision variables: {saturated}")

out = Path(__file__).parent / "output"
path = write_trajectory_csv(
    out / "connectivity_trajectory.csv", traj, res.closed_loop.intervals[0].game
)
print(f"trajectory written to {path}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    x = traj.column("x")
    for i in range(4):
        ax.plot(x[:, 3 * i], x[:, 3 * i + 1], lw=0.8, label=f"agent {i + 1}")
        ax.plot(*scenario.plant.sources[i], "o", ms=6, color=f"C{i}")
        ax.plot(*tail_u[i], "x", ms=8, color=f"C{i}")
    ax.add_patch(
        plt.Rectangle((-16, -6), 32, 12, fill=False, ls="--", color="gray")
    )
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(ncol=4, fontsize=8)
    ax.set_title("fleet trajectories (o sources, x learned setpoints)")
    fig.tight_layout()
    fig.savefig(out / "connectivity_trajectories.png", dpi=130)
    print(f"plot written to {out / 'connectivity_trajectories.png'}")
except ImportError:
    print("matplotlib not available; skipping the plot")
