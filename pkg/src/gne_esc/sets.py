"""Convex set variants and exact Euclidean projections.

Three set shapes cover everything the algorithms need: boxes for local
decision constraints and estimator parameter ranges, balls, and generic
halfspace intersections. Projections are closed form except for the
halfspace case, which runs a small dense active-set solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "Box",
    "Ball",
    "Halfspaces",
    "ConvexSet",
    "project",
    "project_nonneg",
    "project_tangent_cone",
    "ProjectionError",
]

# Active-bound tolerance for tangent-cone projections; below integrator
# error scale.
ACTIVE_TOL = 1e-9


class ProjectionError(RuntimeError):
    """Raised when an iterative projection fails to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have matching shapes")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper componentwise")

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, v, tol=1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.size

    def contains(self, v, tol=1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.linalg.norm(v - self.center) <= self.radius + tol)


@dataclass(frozen=True)
class Halfspaces:
    """Intersection {x | C x <= d}, verified nonempty at construction."""

    C: np.ndarray
    d: np.ndarray
    max_iters: int = field(default=200, compare=False)

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)
        if C.shape[0] != d.size:
            raise ValueError("C rows and d entries must match")
        # Phase-1 feasibility: failing early beats silent projection failures.
        res = linprog(
            c=np.zeros(C.shape[1]),
            A_ub=C,
            b_ub=d,
            bounds=[(None, None)] * C.shape[1],
            method="highs",
        )
        if not res.success:
            raise ValueError("halfspace set is empty (phase-1 solve infeasible)")

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    def contains(self, v, tol=1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all(self.C @ v <= self.d + tol))


ConvexSet = Box | Ball | Halfspaces


def _check_dim(s, v):
    if v.size != s.dim:
        raise ValueError(f"vector of dim {v.size} does not match set dim {s.dim}")


def project(s: ConvexSet, v) -> np.ndarray:
    """Euclidean projection argmin_{y in S} ||y - v||."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    _check_dim(s, v)
    if isinstance(s, Box):
        return np.clip(v, s.lower, s.upper)
    if isinstance(s, Ball):
        offset = v - s.center
        norm = np.linalg.norm(offset)
        if norm <= s.radius:
            return v.copy()
        return s.center + offset * (s.radius / norm)
    if isinstance(s, Halfspaces):
        return _project_halfspaces(s, v)
    raise TypeError(f"unknown set type {type(s)!r}")


def _project_halfspaces(s: Halfspaces, v: np.ndarray) -> np.ndarray:
    """Dual active-set solve for the projection onto {x | Cx <= d}.

    The projection is v - C_W^T mu with mu >= 0 supported on the working
    set W. Rows enter on primal violation and leave on negative
    multipliers until both checks clear.
    """
    C, d = s.C, s.d
    feas_tol = 1e-10 * max(1.0, float(np.max(np.abs(d))) if d.size else 1.0)
    if np.all(C @ v <= d + feas_tol):
        return v.copy()
    working: list[int] = []
    y = v.copy()
    for _ in range(s.max_iters):
        if working:
            Cw = C[working]
            gram = Cw @ Cw.T
            rhs = Cw @ v - d[working]
            try:
                mu = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                mu = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            if np.any(mu < -feas_tol):
                # Drop the most negative multiplier and retry.
                drop = int(np.argmin(mu))
                working.pop(drop)
                continue
            y = v - Cw.T @ mu
        else:
            y = v.copy()
        slack = C @ y - d
        worst = int(np.argmax(slack))
        if slack[worst] <= feas_tol:
            return y
        if worst in working:
            # Numerically stuck: the working-set solve failed to clear its
            # own row, so bail out with the residual.
            break
        working.append(worst)
    raise ProjectionError(
        "halfspace projection did not converge", residual=float(np.max(C @ y - d))
    )


def project_nonneg(v) -> np.ndarray:
    """Componentwise projection onto the non-negative orthant."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def project_tangent_cone(s: Box, point_in_set, v) -> np.ndarray:
    """Project v onto the tangent cone of a box at a point of the box.

    Outward components at active bounds are zeroed; interior components
    pass through. Guarantees point + h*w stays in the box for small h > 0
    (a post-step clamp removes the residual O(h^2) drift of an explicit
    integrator).
    """
    if not isinstance(s, Box):
        raise TypeError("tangent-cone projection is implemented for Box sets only")
    p = np.atleast_1d(np.asarray(point_in_set, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    _check_dim(s, p)
    _check_dim(s, v)
    if np.any(p < s.lower - ACTIVE_TOL) or np.any(p > s.upper + ACTIVE_TOL):
        raise ValueError("point lies outside the box beyond tolerance")
    w = v.copy()
    w[(p <= s.lower + ACTIVE_TOL) & (v < 0.0)] = 0.0
    w[(p >= s.upper - ACTIVE_TOL) & (v > 0.0)] = 0.0
    return w
