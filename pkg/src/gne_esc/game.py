"""Game definitions: costs, constraints, pseudo-gradient, KKT residual.

A game couples per-agent cost evaluators with local convex decision sets
and shared linear coupling constraints A u <= b. Costs are supplied as
callbacks J_i(u_i, u_minus_i) plus optional analytic gradients, so the
same description serves both the verification oracle (gradients allowed)
and the data-driven controller (cost outputs only).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .sets import ConvexSet, project, project_nonneg

__all__ = [
    "GameSpec",
    "SteadyStateMap",
    "pseudo_gradient",
    "estimate_monotonicity",
    "kkt_residual",
]

# Central-difference base step for gradient fallbacks: standard trade-off
# of truncation vs. round-off at double precision.
FD_STEP = 1e-5


@dataclass(frozen=True)
class GameSpec:
    """N-agent game with local sets and linear coupling constraints.

    cost[i] is J_i(u_i, u_minus_i) -> float with u_minus_i the stacked
    decisions of the other agents in index order. cost_grad[i], when
    present, returns the partial gradient of J_i in u_i with the same
    argument convention.
    """

    dims: tuple[int, ...]
    cost: tuple[Callable[[np.ndarray, np.ndarray], float], ...]
    local_sets: tuple[ConvexSet, ...]
    coupling_A: np.ndarray
    coupling_b: np.ndarray
    cost_grad: tuple[Callable[[np.ndarray, np.ndarray], np.ndarray], ...] | None = None
    fd_step: float = FD_STEP
    # Optional vectorized evaluator of all agents' costs at once; used by
    # the closed-loop harness as a fast path, must agree with cost[i].
    cost_vector: Callable[[np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )

    def __post_init__(self):
        dims = tuple(int(m) for m in self.dims)
        object.__setattr__(self, "dims", dims)
        A = np.atleast_2d(np.asarray(self.coupling_A, dtype=float))
        b = np.atleast_1d(np.asarray(self.coupling_b, dtype=float))
        object.__setattr__(self, "coupling_A", A)
        object.__setattr__(self, "coupling_b", b)
        if len(self.cost) != self.n_agents:
            raise ValueError("one cost evaluator per agent required")
        if len(self.local_sets) != self.n_agents:
            raise ValueError("one local set per agent required")
        if self.cost_grad is not None and len(self.cost_grad) != self.n_agents:
            raise ValueError("one gradient per agent when gradients are supplied")
        for i, (m, s) in enumerate(zip(dims, self.local_sets)):
            if s.dim != m:
                raise ValueError(f"local set of agent {i} has dim {s.dim}, expected {m}")
        if A.shape[1] != self.m_total:
            raise ValueError(
                f"coupling matrix has {A.shape[1]} columns, expected {self.m_total}"
            )
        if b.size != A.shape[0]:
            raise ValueError("coupling vector length must match coupling matrix rows")
        offsets = np.concatenate([[0], np.cumsum(dims)])
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_agents(self) -> int:
        return len(self.dims)

    @property
    def m_total(self) -> int:
        return int(sum(self.dims))

    @property
    def n_coupling(self) -> int:
        return self.coupling_A.shape[0]

    def block(self, i: int) -> slice:
        """Index slice of agent i inside the stacked decision vector."""
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    def split(self, u: np.ndarray) -> list[np.ndarray]:
        return [u[self.block(i)] for i in range(self.n_agents)]

    def others(self, u: np.ndarray, i: int) -> np.ndarray:
        """Stacked decisions of all agents except i, in index order."""
        blk = self.block(i)
        return np.concatenate([u[: blk.start], u[blk.stop :]])

    def eval_cost(self, i: int, u: np.ndarray) -> float:
        value = float(self.cost[i](u[self.block(i)], self.others(u, i)))
        if not np.isfinite(value):
            raise ValueError(f"cost of agent {i} is not finite at the queried point")
        return value

    def eval_costs(self, u: np.ndarray) -> np.ndarray:
        if self.cost_vector is not None:
            vals = np.asarray(self.cost_vector(u), dtype=float)
            if not np.all(np.isfinite(vals)):
                bad = int(np.flatnonzero(~np.isfinite(vals))[0])
                raise ValueError(f"cost of agent {bad} is not finite")
            return vals
        return np.array([self.eval_cost(i, u) for i in range(self.n_agents)])

    def feasible_local(self, u: np.ndarray, tol=1e-9) -> bool:
        return all(
            s.contains(u[self.block(i)], tol) for i, s in enumerate(self.local_sets)
        )

    def project_local(self, u: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [project(s, u[self.block(i)]) for i, s in enumerate(self.local_sets)]
        )


@dataclass(frozen=True)
class SteadyStateMap:
    """Per-agent equilibrium state map u_i -> pi_i(u_i) of the paired plant."""

    pi: tuple[Callable[[np.ndarray], np.ndarray], ...]
    pi_jacobian: tuple[Callable[[np.ndarray], np.ndarray], ...] | None = None

    def collective(self, game: GameSpec, u: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [np.atleast_1d(self.pi[i](u[game.block(i)])) for i in range(game.n_agents)]
        )


def _fd_partial(game: GameSpec, i: int, u: np.ndarray) -> np.ndarray:
    """Central finite differences of J_i in the agent's own block."""
    blk = game.block(i)
    grad = np.zeros(blk.stop - blk.start)
    for k in range(blk.stop - blk.start):
        idx = blk.start + k
        h = game.fd_step * max(1.0, abs(u[idx]))
        up, dn = u.copy(), u.copy()
        up[idx] += h
        dn[idx] -= h
        grad[k] = (game.eval_cost(i, up) - game.eval_cost(i, dn)) / (2.0 * h)
    return grad


def fd_full_gradient(game: GameSpec, i: int, u: np.ndarray) -> np.ndarray:
    """Central finite differences of J_i in the full decision vector."""
    grad = np.zeros(game.m_total)
    for idx in range(game.m_total):
        h = game.fd_step * max(1.0, abs(u[idx]))
        up, dn = u.copy(), u.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (game.eval_cost(i, up) - game.eval_cost(i, dn)) / (2.0 * h)
    return grad


def pseudo_gradient(game: GameSpec, u: np.ndarray) -> np.ndarray:
    """Stacked partial gradients col(grad_{u_i} J_i)."""
    u = np.asarray(u, dtype=float)
    if u.size != game.m_total:
        raise ValueError(f"decision vector has dim {u.size}, expected {game.m_total}")
    blocks = []
    for i in range(game.n_agents):
        if game.cost_grad is not None:
            g = np.atleast_1d(
                np.asarray(game.cost_grad[i](u[game.block(i)], game.others(u, i)), float)
            )
            if g.size != game.dims[i]:
                raise ValueError(f"gradient of agent {i} has wrong dimension")
        else:
            g = _fd_partial(game, i, u)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"partial gradient of agent {i} is not finite")
        blocks.append(g)
    return np.concatenate(blocks)


def estimate_monotonicity(
    game: GameSpec, sample_pairs: Sequence[tuple[np.ndarray, np.ndarray]]
) -> tuple[float, float]:
    """Sampled strong-monotonicity and Lipschitz constants of F.

    mu_hat is the minimum of (u-v)^T (F(u)-F(v)) / ||u-v||^2 over the
    pairs, ell_hat the maximum of ||F(u)-F(v)|| / ||u-v||. Diagnostic
    only: a nonpositive mu_hat warns rather than raises.
    """
    mu_hat = np.inf
    ell_hat = 0.0
    used = 0
    for u, v in sample_pairs:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        gap = u - v
        dist2 = float(gap @ gap)
        if dist2 == 0.0:
            continue
        df = pseudo_gradient(game, u) - pseudo_gradient(game, v)
        mu_hat = min(mu_hat, float(gap @ df) / dist2)
        ell_hat = max(ell_hat, float(np.linalg.norm(df)) / np.sqrt(dist2))
        used += 1
    if used == 0:
        raise ValueError("all sample pairs are coincident")
    if mu_hat <= 0.0:
        warnings.warn(
            f"sampled monotonicity constant is nonpositive (mu_hat={mu_hat:.3e})",
            stacklevel=2,
        )
    return float(mu_hat), float(ell_hat)


def kkt_residual(game: GameSpec, u: np.ndarray, lam: np.ndarray) -> float:
    """Natural-map residual of the v-GNE KKT system; zero iff (u, lam) solves it."""
    u = np.asarray(u, dtype=float)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if u.size != game.m_total:
        raise ValueError("decision vector dimension mismatch")
    if lam.size != game.n_coupling:
        raise ValueError("dual vector dimension mismatch")
    F = pseudo_gradient(game, u)
    primal_gap = u - game.project_local(u - F - game.coupling_A.T @ lam)
    dual_gap = lam - project_nonneg(lam + game.coupling_A @ u - game.coupling_b)
    return float(np.linalg.norm(primal_gap) + np.linalg.norm(dual_gap))
