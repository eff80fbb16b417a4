"""Full-information GNE seeking on a two-agent quadratic game.

Both agents want u_i = 1 but share the budget u_1 + u_2 <= 1; the unique
variational equilibrium splits the budget at (0.5, 0.5) with shadow price
lambda = 1. The script solves the game exactly through the KKT oracle,
checks the step-size certificate of the projected flow, integrates the
flow, and reports the distance to the equilibrium over time.

Run:  python demos/01_full_information_flow.py
"""

import numpy as np

from gne_esc import RunConfig, build_closed_loop, integrate, kkt_residual
from gne_esc.full_info import step_size_certificate
from gne_esc.oracle import solve_quadratic_kkt
from gne_esc.scenarios import load_scenario

scenario = load_scenario("quadratic2")
interval = scenario.intervals(1e9)[0]
game = interval.game

sol = solve_quadratic_kkt(interval.quad)
print("oracle v-GNE:")
print(f"  u* = {sol.u_star},  lambda* = {sol.lambda_star}")
print(f"  active constraints: {sol.active_set}")
print(f"  KKT residual: {sol.residual:.2e}")

cert = step_size_certificate(game, scenario.steps, mu=2.0, ell=2.0)
print(f"\n{cert}")

cfg = RunConfig(step=0.01, horizon=150.0, sample_stride=200, mode="full_info")
loop = build_closed_loop(scenario, cfg)
traj = integrate(loop.rhs, loop.state0, cfg)
traj.layout = loop.layout

print("\nprojected primal-dual flow from u(0) = 0:")
print(f"{'t':>8} {'u_1':>9} {'u_2':>9} {'lambda':>9} {'dist':>10}")
for k in range(0, traj.times.size, max(1, traj.times.size // 10)):
    u = traj.column("u")[k]
    lam = traj.column("lam")[k]
    dist = np.linalg.norm(u - sol.u_star)
    print(f"{traj.times[k]:8.1f} {u[0]:9.5f} {u[1]:9.5f} {lam[0]:9.5f} {dist:10.2e}")

u_T = traj.column("u")[-1]
lam_T = traj.column("lam")[-1]
print(f"\nterminal KKT residual: {kkt_residual(game, u_T, lam_T):.2e}")
print(f"terminal distance to u*: {np.linalg.norm(u_T - sol.u_star):.2e}")
