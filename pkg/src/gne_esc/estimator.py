"""Per-agent time-varying parameter estimation from cost measurements.

Each agent runs an observer that identifies theta_i = [theta0_i; theta1_i]
in the cost-output model  dl_i/dt = [1, du_i^T] theta_i,  where theta1_i
is the partial gradient the controller needs and theta0_i collects the
influence of the other agents. The update law filters the regressor and
normalizes by a regularized excitation matrix Sigma_i:

    dl_hat  = [1, du^T] theta_hat + K e + c^T dtheta_hat
    dc^T    = -K c^T + [1, du^T]
    deta    = -K eta_hat
    dSigma  = c c^T - rho Sigma + sigma I
    dtheta  = Pi_Theta(theta_hat, Sigma^-1 (c (e - eta_hat) - sigma theta_hat))

The estimation error e is supplied by the caller: measured cost minus
l_hat for static agents, measured plant output minus l_hat for dynamical
agents. A tangent-cone projection keeps theta_hat inside its admissible
box Theta along the flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import GameSpec, fd_full_gradient, pseudo_gradient
from .sets import Box, project_tangent_cone

__all__ = [
    "EstimatorState",
    "EstimatorTuning",
    "EstimatorDerivatives",
    "estimator_rhs",
    "pe_metric",
    "theta_truth",
]


@dataclass(frozen=True)
class EstimatorTuning:
    """Free design parameters of one agent's estimator."""

    K: float
    rho: float
    sigma: float
    Sigma0: np.ndarray
    Theta: Box

    def __post_init__(self):
        if not (self.K > 0 and self.rho > 0 and self.sigma > 0):
            raise ValueError("K, rho, sigma must be positive")
        S0 = np.atleast_2d(np.asarray(self.Sigma0, dtype=float))
        object.__setattr__(self, "Sigma0", S0)
        if not np.allclose(S0, S0.T, atol=1e-12):
            raise ValueError("Sigma0 must be symmetric")
        if np.linalg.eigvalsh(S0).min() <= 0.0:
            raise ValueError("Sigma0 must be positive definite")
        if not np.all(np.isfinite(self.Theta.lower)) or not np.all(
            np.isfinite(self.Theta.upper)
        ):
            raise ValueError("Theta must be a bounded box")


@dataclass
class EstimatorState:
    """Observer state of one agent: (l_hat, eta_hat, theta_hat, c, Sigma)."""

    l_hat: float
    eta_hat: float
    theta_hat: np.ndarray
    c: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        self.theta_hat = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        p = self.theta_hat.size
        if self.c.size != p or self.Sigma.shape != (p, p):
            raise ValueError("estimator state blocks have inconsistent dimensions")

    @classmethod
    def fresh(cls, first_output: float, tuning: EstimatorTuning) -> "EstimatorState":
        """Zero-information start: l_hat at the first measurement, rest zero."""
        p = tuning.Theta.dim
        return cls(
            l_hat=float(first_output),
            eta_hat=0.0,
            theta_hat=np.zeros(p),
            c=np.zeros(p),
            Sigma=tuning.Sigma0.copy(),
        )


@dataclass
class EstimatorDerivatives:
    d_l_hat: float
    d_eta_hat: float
    d_theta_hat: np.ndarray
    d_c: np.ndarray
    d_Sigma: np.ndarray


def estimator_rhs(
    st: EstimatorState,
    tune: EstimatorTuning,
    u_dot_i: np.ndarray,
    e_i: float,
) -> EstimatorDerivatives:
    """Time derivatives of all five observer blocks.

    The theta update is evaluated first because the l_hat row references
    it through the c^T dtheta term; no implicit loop remains after that.
    """
    u_dot_i = np.atleast_1d(np.asarray(u_dot_i, dtype=float))
    p = st.theta_hat.size
    if u_dot_i.size != p - 1:
        raise ValueError("u_dot dimension must be one less than the regressor size")
    regressor = np.concatenate([[1.0], u_dot_i])
    rhs_vec = st.c * (e_i - st.eta_hat) - tune.sigma * st.theta_hat
    try:
        raw_update = np.linalg.solve(st.Sigma, rhs_vec)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(
            "Sigma solve failed despite regularization; condition estimate "
            f"{np.linalg.cond(st.Sigma):.3e}"
        ) from exc
    d_theta = project_tangent_cone(tune.Theta, st.theta_hat, raw_update)
    d_l = float(regressor @ st.theta_hat + tune.K * e_i + st.c @ d_theta)
    d_c = -tune.K * st.c + regressor
    d_eta = -tune.K * st.eta_hat
    d_Sigma = np.outer(st.c, st.c) - tune.rho * st.Sigma + tune.sigma * np.eye(p)
    return EstimatorDerivatives(d_l, d_eta, d_theta, d_c, d_Sigma)


def pe_metric(times: np.ndarray, c_samples: np.ndarray, window_T: float) -> float:
    """Empirical persistence-of-excitation level of a regressor-filter path.

    Returns the minimum over sliding windows of length window_T of the
    smallest eigenvalue of the windowed Gram integral of c(t), computed
    by trapezoidal quadrature on a uniformly sampled trajectory.
    """
    times = np.asarray(times, dtype=float)
    c_samples = np.atleast_2d(np.asarray(c_samples, dtype=float))
    if c_samples.shape[0] != times.size:
        raise ValueError("one c sample per time stamp required")
    if times.size < 2:
        raise ValueError("trajectory too short")
    dt = float(times[1] - times[0])
    if not np.allclose(np.diff(times), dt, rtol=1e-6, atol=1e-12):
        raise ValueError("pe_metric requires uniform sampling")
    span = float(times[-1] - times[0])
    if window_T > span + 1e-12:
        raise ValueError("window longer than the sampled trajectory")
    width = max(1, int(round(window_T / dt)))
    outer = np.einsum("ni,nj->nij", c_samples, c_samples)
    # Cumulative trapezoid so each window Gram is a difference of prefix sums.
    segments = 0.5 * dt * (outer[1:] + outer[:-1])
    prefix = np.concatenate([np.zeros((1,) + outer.shape[1:]), np.cumsum(segments, axis=0)])
    grams = prefix[width:] - prefix[:-width]
    eigs = np.linalg.eigvalsh(grams)
    return float(eigs[:, 0].min())


def theta_truth(
    game: GameSpec, u: np.ndarray, u_dot: np.ndarray
) -> list[tuple[float, np.ndarray]]:
    """Exact (theta0_i, theta1_i) per agent; verification oracle only.

    theta0_i is the inner product of agent i's cross gradient with the
    other agents' velocities, theta1_i the partial gradient in u_i. Never
    supplied to the controller.
    """
    u = np.asarray(u, dtype=float)
    u_dot = np.asarray(u_dot, dtype=float)
    F = pseudo_gradient(game, u)
    out = []
    for i in range(game.n_agents):
        blk = game.block(i)
        full = fd_full_gradient(game, i, u)
        mask = np.ones(game.m_total, dtype=bool)
        mask[blk] = False
        theta0 = float(full[mask] @ u_dot[mask])
        out.append((theta0, F[blk].copy()))
    return out
