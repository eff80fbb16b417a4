"""Data-driven v-GNE learning law and the semi-decentralized message flow.

Per-agent updates are driven by the estimated partial gradient plus a
sinusoidal dither; a central coordinator assembles (u, du) from agent
messages and integrates the shared dual variable. With the dither off and
the exact pseudo-gradient substituted, the law reduces bitwise to the
full-information flow (same code path).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .full_info import StepSizes, projected_primal_dual_rhs
from .game import GameSpec
from .sets import ConvexSet, project, project_nonneg

__all__ = [
    "DitherSpec",
    "AgentMsg",
    "CoordinatorMsg",
    "dither",
    "dither_stack",
    "controller_rhs",
    "agent_decision_rhs",
    "coordinator_step",
]


@dataclass(frozen=True)
class DitherSpec:
    """Sinusoidal perturbation signals, one channel per decision component.

    Channel j of agent i is (a_i / sqrt(m_i)) sin(k_omega wbar_i^j t + phase),
    so ||d_i(t)|| <= a_i with distinct frequencies across all channels.
    """

    amplitudes: np.ndarray
    base_frequencies: tuple[np.ndarray, ...]
    frequency_factor: float = 1.0
    phases: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        object.__setattr__(self, "amplitudes", amps)
        freqs = tuple(
            np.atleast_1d(np.asarray(w, dtype=float)) for w in self.base_frequencies
        )
        object.__setattr__(self, "base_frequencies", freqs)
        if amps.size != len(freqs):
            raise ValueError("one amplitude and one frequency list per agent")
        if np.any(amps < 0.0):
            raise ValueError("amplitudes must be nonnegative")
        if self.phases is None:
            object.__setattr__(
                self, "phases", tuple(np.zeros_like(w) for w in freqs)
            )
        else:
            phases = tuple(
                np.atleast_1d(np.asarray(p, dtype=float)) for p in self.phases
            )
            object.__setattr__(self, "phases", phases)
            for p, w in zip(phases, freqs):
                if p.size != w.size:
                    raise ValueError("one phase per dither channel")
        all_freqs = np.concatenate(freqs)
        if np.unique(all_freqs).size != all_freqs.size:
            warnings.warn(
                "dither frequencies collide across channels; excitation may "
                "not separate the agents",
                stacklevel=2,
            )

    @property
    def n_agents(self) -> int:
        return self.amplitudes.size

    def slowest_period(self) -> float:
        """Period of the slowest channel; used by sustained-entry detection."""
        w = self.frequency_factor * np.concatenate(self.base_frequencies)
        w = w[w > 0.0]
        if w.size == 0:
            return 0.0
        return float(2.0 * np.pi / w.min())

    def stacked_arrays(self):
        """Per-channel (amplitude, angular frequency, phase) over stacked u."""
        amp = np.concatenate(
            [
                np.full(w.size, a / np.sqrt(w.size))
                for a, w in zip(self.amplitudes, self.base_frequencies)
            ]
        )
        omega = self.frequency_factor * np.concatenate(self.base_frequencies)
        phase = np.concatenate(self.phases)
        return amp, omega, phase


def dither(spec: DitherSpec, i: int, t: float) -> np.ndarray:
    """Perturbation signal of agent i at time t."""
    w = spec.base_frequencies[i]
    a = spec.amplitudes[i] / np.sqrt(w.size)
    return a * np.sin(spec.frequency_factor * w * t + spec.phases[i])


def dither_stack(spec: DitherSpec, t: float) -> np.ndarray:
    """All agents' perturbations stacked to match the collective decision."""
    amp, omega, phase = spec.stacked_arrays()
    return amp * np.sin(omega * t + phase)


def controller_rhs(
    game: GameSpec,
    steps: StepSizes,
    spec: DitherSpec,
    state,
    theta1_hat: np.ndarray,
    t: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Collective data-driven update: estimated gradients plus dither."""
    u = np.asarray(state.u, dtype=float)
    lam = np.asarray(state.lam, dtype=float)
    theta1_hat = np.asarray(theta1_hat, dtype=float)
    if theta1_hat.size != game.m_total:
        raise ValueError("theta1_hat must stack consistently with u")
    if not np.all(np.isfinite(theta1_hat)):
        raise ValueError("theta1_hat is not finite")
    push = dither_stack(spec, t)
    if push.size != game.m_total:
        raise ValueError(
            f"dither spec has {push.size} channels, game expects {game.m_total}"
        )
    return projected_primal_dual_rhs(game, steps, u, lam, theta1_hat, push)


def agent_decision_rhs(
    local_set: ConvexSet,
    gamma_i: float,
    A_cols_i: np.ndarray,
    u_i: np.ndarray,
    lam: np.ndarray,
    theta1_i: np.ndarray,
    d_i: np.ndarray,
) -> np.ndarray:
    """Decision update of a single agent.

    Deliberately takes only agent-local data (own decision block, own
    estimate, own dither, own columns of A) plus the broadcast dual, so
    the star-topology information flow is explicit: nothing here can read
    the other agents' decisions.
    """
    return -u_i + project(local_set, u_i - gamma_i * (theta1_i + A_cols_i.T @ lam) + d_i)


@dataclass(frozen=True)
class AgentMsg:
    """What an agent sends the coordinator: its decision and derivative."""

    agent: int
    u_i: np.ndarray
    u_dot_i: np.ndarray


@dataclass(frozen=True)
class CoordinatorMsg:
    """What the coordinator broadcasts back: the dual variable."""

    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))


def coordinator_step(
    msgs: list[AgentMsg], steps: StepSizes, game: GameSpec, lam: np.ndarray
) -> np.ndarray:
    """Dual update assembled from agent messages (one per agent)."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    by_agent = {int(m.agent): m for m in msgs}
    if sorted(by_agent) != list(range(game.n_agents)):
        missing = sorted(set(range(game.n_agents)) - set(by_agent))
        raise ValueError(f"missing agent messages: {missing}")
    u = np.concatenate(
        [np.atleast_1d(np.asarray(by_agent[i].u_i, float)) for i in range(game.n_agents)]
    )
    du = np.concatenate(
        [
            np.atleast_1d(np.asarray(by_agent[i].u_dot_i, float))
            for i in range(game.n_agents)
        ]
    )
    A = game.coupling_A
    dual_arg = lam + steps.gamma0 * (A @ u - game.coupling_b + 2.0 * (A @ du))
    return -lam + project_nonneg(dual_arg)
