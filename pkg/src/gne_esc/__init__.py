"""GNE learning via projected primal-dual flows and extremum seeking.

The library simulates generalized Nash equilibrium seeking in three
information regimes: a full-information projected primal-dual flow, a
data-driven variant where agents estimate their partial gradients from
cost measurements only, and a singularly perturbed variant for agents
with nonlinear dynamics. An independent KKT/extragradient oracle supplies
ground truth for every bundled scenario.
"""

from ._version import __version__
from .controller import AgentMsg, CoordinatorMsg, DitherSpec, controller_rhs, dither
from .estimator import EstimatorState, EstimatorTuning, estimator_rhs, pe_metric
from .full_info import (
    CertificateReport,
    PrimalDualState,
    StepSizes,
    full_info_rhs,
    lemma1_probe,
    preconditioner,
    step_size_certificate,
)
from .game import GameSpec, estimate_monotonicity, kkt_residual, pseudo_gradient
from .harness import (
    RunConfig,
    SweepGrid,
    build_closed_loop,
    integrate,
    run_metrics,
    run_scenario,
    sweep,
)
from .oracle import QuadraticGameSpec, solve_extragradient, solve_quadratic_kkt
from .plants import (
    PlantState,
    UnicycleParams,
    WindFarmParams,
    cost_output,
    frozen_input_decay_probe,
    plant_rhs,
    steady_state_residual,
)
from .scenarios import Scenario, load_scenario
from .sets import Ball, Box, Halfspaces, project, project_nonneg, project_tangent_cone

__all__ = [
    "__version__",
    "AgentMsg",
    "Ball",
    "Box",
    "CertificateReport",
    "CoordinatorMsg",
    "DitherSpec",
    "EstimatorState",
    "EstimatorTuning",
    "GameSpec",
    "Halfspaces",
    "PlantState",
    "PrimalDualState",
    "QuadraticGameSpec",
    "RunConfig",
    "Scenario",
    "StepSizes",
    "SweepGrid",
    "UnicycleParams",
    "WindFarmParams",
    "build_closed_loop",
    "controller_rhs",
    "cost_output",
    "dither",
    "estimate_monotonicity",
    "estimator_rhs",
    "frozen_input_decay_probe",
    "full_info_rhs",
    "integrate",
    "kkt_residual",
    "lemma1_probe",
    "load_scenario",
    "pe_metric",
    "plant_rhs",
    "preconditioner",
    "project",
    "project_nonneg",
    "project_tangent_cone",
    "pseudo_gradient",
    "run_metrics",
    "run_scenario",
    "solve_extragradient",
    "solve_quadratic_kkt",
    "steady_state_residual",
    "step_size_certificate",
    "sweep",
]
