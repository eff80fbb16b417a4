"""Independent ground-truth solvers for the variational GNE.

Two routes: an exact active-set KKT enumeration for quadratic games with
few inequality rows, and a projected extragradient iteration on the
primal-dual operator for general monotone games, warm-polished by a
semismooth root solve of the natural map. The oracle is verification
infrastructure and is free to use analytic or finite-difference
gradients; nothing here feeds the data-driven controller.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import root

from .game import GameSpec, kkt_residual, pseudo_gradient
from .sets import Box, project_nonneg

__all__ = [
    "QuadraticGameSpec",
    "OracleSolution",
    "solve_quadratic_kkt",
    "solve_extragradient",
    "cached_vgne",
    "scenario_hash",
]

ENUMERATION_LIMIT = 2**12


@dataclass(frozen=True)
class QuadraticGameSpec:
    """Quadratic game with affine pseudo-gradient F(u) = M u + c0."""

    game: GameSpec
    M: np.ndarray
    c0: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        c0 = np.atleast_1d(np.asarray(self.c0, dtype=float))
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "c0", c0)
        m = self.game.m_total
        if M.shape != (m, m) or c0.size != m:
            raise ValueError("affine pseudo-gradient blocks do not match the game")


@dataclass
class OracleSolution:
    u_star: np.ndarray
    lambda_star: np.ndarray
    residual: float
    active_set: tuple[str, ...] = ()


def _box_rows(game: GameSpec) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Finite box bounds as inequality rows G u <= h with labels."""
    rows, rhs, labels = [], [], []
    for i, s in enumerate(game.local_sets):
        if not isinstance(s, Box):
            raise ValueError("active-set enumeration requires box local sets")
        blk = game.block(i)
        for k in range(s.dim):
            idx = blk.start + k
            if np.isfinite(s.upper[k]):
                row = np.zeros(game.m_total)
                row[idx] = 1.0
                rows.append(row)
                rhs.append(float(s.upper[k]))
                labels.append(f"box[{idx}]<=hi")
            if np.isfinite(s.lower[k]):
                row = np.zeros(game.m_total)
                row[idx] = -1.0
                rows.append(row)
                rhs.append(-float(s.lower[k]))
                labels.append(f"box[{idx}]>=lo")
    G = np.array(rows) if rows else np.zeros((0, game.m_total))
    return G, np.array(rhs), labels


def solve_quadratic_kkt(quad: QuadraticGameSpec, tol: float = 1e-9) -> OracleSolution:
    """Exact v-GNE of a strongly monotone quadratic game by enumeration.

    Walks active subsets of the coupling rows and finite box bounds
    (smallest first), solves the associated linear KKT system, and
    returns the unique solution passing primal/dual feasibility and
    complementarity.
    """
    game = quad.game
    M, c0 = quad.M, quad.c0
    sym_eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
    if sym_eigs.min() <= 0.0:
        raise ValueError(
            "pseudo-gradient is not strongly monotone "
            f"(min symmetric eigenvalue {sym_eigs.min():.3e})"
        )
    A, b = game.coupling_A, game.coupling_b
    G, h, box_labels = _box_rows(game)
    labels = [f"coupling[{r}]" for r in range(A.shape[0])] + box_labels
    rows = np.vstack([A, G]) if G.size else A.copy()
    rhs = np.concatenate([b, h])
    n_rows = rows.shape[0]
    if 2**n_rows > ENUMERATION_LIMIT:
        raise ValueError(
            f"{n_rows} inequality rows exceed the enumeration budget; "
            "use solve_extragradient instead"
        )
    m = game.m_total
    q = A.shape[0]
    order = sorted(range(2**n_rows), key=lambda mask: bin(mask).count("1"))
    for mask in order:
        active = [r for r in range(n_rows) if mask >> r & 1]
        Ra = rows[active]
        k = len(active)
        kkt = np.zeros((m + k, m + k))
        kkt[:m, :m] = M
        kkt[:m, m:] = Ra.T
        kkt[m:, :m] = Ra
        vec = np.concatenate([-c0, rhs[active]])
        try:
            sol = np.linalg.solve(kkt, vec)
        except np.linalg.LinAlgError:
            continue
        u = sol[:m]
        mults = sol[m:]
        if np.any(mults < -tol):
            continue
        if np.any(rows @ u > rhs + tol):
            continue
        lam = np.zeros(q)
        for r, mu in zip(active, mults):
            if r < q:
                lam[r] = mu
        res = kkt_residual(game, u, lam)
        if res < max(1e-8, 10 * tol):
            return OracleSolution(u, lam, res, tuple(labels[r] for r in active))
    raise RuntimeError("no active set yields a consistent KKT solution")


def _pd_operator(game: GameSpec, u: np.ndarray, lam: np.ndarray):
    F = pseudo_gradient(game, u)
    return F + game.coupling_A.T @ lam, game.coupling_b - game.coupling_A @ u


def _project_pd(game: GameSpec, u: np.ndarray, lam: np.ndarray):
    return game.project_local(u), project_nonneg(lam)


def _natural_map(game: GameSpec, z: np.ndarray) -> np.ndarray:
    m = game.m_total
    u, lam = z[:m], z[m:]
    F = pseudo_gradient(game, u)
    ru = u - game.project_local(u - F - game.coupling_A.T @ lam)
    rl = lam - project_nonneg(lam + game.coupling_A @ u - game.coupling_b)
    return np.concatenate([ru, rl])


def _sample_primal_lipschitz(game: GameSpec, rng: np.random.Generator, n_pairs=15) -> float:
    """Crude sampled Lipschitz constant of the pseudo-gradient over Omega."""
    worst = 1e-12
    for _ in range(n_pairs):
        u1 = game.project_local(rng.standard_normal(game.m_total))
        u2 = game.project_local(u1 + 0.1 * rng.standard_normal(game.m_total))
        gap = np.linalg.norm(u2 - u1)
        if gap < 1e-12:
            continue
        df = pseudo_gradient(game, u2) - pseudo_gradient(game, u1)
        worst = max(worst, float(np.linalg.norm(df)) / gap)
    return worst


def solve_extragradient(
    game: GameSpec,
    tol: float = 1e-8,
    max_iters: int = 20000,
    u0: np.ndarray | None = None,
    lam0: np.ndarray | None = None,
    seed: int = 0,
    polish: bool = True,
) -> OracleSolution:
    """Projected extragradient on the primal-dual operator over Omega x R+.

    Per-block step sizes come from a sampled Lipschitz constant of the
    pseudo-gradient and the coupling norm (the operator is badly scaled
    when costs are physical quantities), start at 0.9 of the admissible
    metric bound, and are halved whenever the KKT residual fails to
    decrease. Near the solution an optional semismooth root solve of the
    natural map polishes the iterate to tight residuals.
    """
    rng = np.random.default_rng(seed)
    m, q = game.m_total, game.n_coupling
    u = game.project_local(np.zeros(m) if u0 is None else np.asarray(u0, float))
    lam = project_nonneg(np.zeros(q) if lam0 is None else np.asarray(lam0, float))
    ell_f = _sample_primal_lipschitz(game, rng)
    norm_A = (
        float(np.linalg.svd(game.coupling_A, compute_uv=False)[0])
        if game.coupling_A.size
        else 0.0
    )
    norm_A = max(norm_A, 1e-9)
    # D-metric Lipschitz bound: L_F * alpha_u + ||A|| sqrt(alpha_u alpha_lam) <= 0.9
    alpha_u = 0.45 / max(ell_f, norm_A)
    alpha_lam = (0.45 / norm_A) ** 2 / alpha_u
    scale = 1.0
    best_res = kkt_residual(game, u, lam)
    best = (u.copy(), lam.copy())
    check_every = 10
    stalled_checks = 0
    for it in range(max_iters):
        au, al = scale * alpha_u, scale * alpha_lam
        gu, gl = _pd_operator(game, u, lam)
        u_half, lam_half = _project_pd(game, u - au * gu, lam - al * gl)
        gu2, gl2 = _pd_operator(game, u_half, lam_half)
        u, lam = _project_pd(game, u - au * gu2, lam - al * gl2)
        if (it + 1) % check_every == 0:
            res = kkt_residual(game, u, lam)
            if res < best_res:
                best_res = res
                best = (u.copy(), lam.copy())
                stalled_checks = 0
            else:
                # halve the steps only on sustained non-decrease; transient
                # dual overshoot must not collapse the step size
                stalled_checks += 1
                if stalled_checks >= 20:
                    scale = max(scale * 0.5, 1e-6)
                    u, lam = best[0].copy(), best[1].copy()
                    stalled_checks = 0
            if best_res <= tol:
                break
            if polish and best_res <= max(1e-5, 1e3 * tol):
                polished = _polish(game, *best, tol)
                if polished is not None:
                    return polished
    if polish and best_res > tol:
        polished = _polish(game, *best, tol)
        if polished is not None:
            return polished
    if best_res > tol:
        raise RuntimeError(
            f"extragradient did not reach tol={tol:.1e}; best residual {best_res:.3e}"
        )
    return OracleSolution(best[0], best[1], best_res)


def _polish(game: GameSpec, u, lam, tol) -> OracleSolution | None:
    z0 = np.concatenate([u, lam])
    try:
        sol = root(lambda z: _natural_map(game, z), z0, method="hybr", tol=1e-12)
    except Exception:
        return None
    if not np.all(np.isfinite(sol.x)):
        return None
    m = game.m_total
    u_p = game.project_local(sol.x[:m])
    lam_p = project_nonneg(sol.x[m:])
    res = kkt_residual(game, u_p, lam_p)
    if res <= tol:
        return OracleSolution(u_p, lam_p, res)
    return None


def scenario_hash(payload: dict) -> str:
    """Stable hash of a resolved scenario description."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cached_vgne(key: str, cache_path: Path | str | None, solver) -> OracleSolution:
    """Memoize oracle solutions in a JSON sidecar keyed by scenario hash."""
    if cache_path is None:
        return solver()
    cache_path = Path(cache_path)
    cache = {}
    if cache_path.exists():
        try:
            cache = json.loads(cache_path.read_text())
        except (json.JSONDecodeError, OSError):
            cache = {}
    if key in cache:
        entry = cache[key]
        return OracleSolution(
            np.asarray(entry["u_star"], float),
            np.asarray(entry["lambda_star"], float),
            float(entry["residual"]),
            tuple(entry.get("active_set", ())),
        )
    sol = solver()
    cache[key] = {
        "u_star": sol.u_star.tolist(),
        "lambda_star": sol.lambda_star.tolist(),
        "residual": sol.residual,
        "active_set": list(sol.active_set),
    }
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    cache_path.write_text(json.dumps(cache, indent=1, sort_keys=True))
    return sol
