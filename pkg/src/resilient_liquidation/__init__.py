"""Optimal liquidation with instantaneous and persistent impact and time-varying resilience."""

from .model import (
    CoefficientFn,
    ContractionConstants,
    ModelError,
    ModelParams,
    OutOfRange,
    ProblemInstance,
    contraction_constants,
    validate_params,
)
from .riccati import RiccatiSolution, SolverConfig, ValidationReport, solve_riccati
from .strategy import (
    CostBreakdown,
    TerminalMiss,
    Trajectory,
    cost_of_trajectory,
    feedback_rate,
    simulate_optimal,
    value_function,
)
from .benchmarks import almgren_chriss_trajectory, obizhaeva_wang_schedule, rho_zero_value, scalar_A_tilde
from .oracle import discretize_problem, oracle_value, solve_kkt

__all__ = [
    "CoefficientFn",
    "ContractionConstants",
    "CostBreakdown",
    "ModelError",
    "ModelParams",
    "OutOfRange",
    "ProblemInstance",
    "RiccatiSolution",
    "SolverConfig",
    "TerminalMiss",
    "Trajectory",
    "ValidationReport",
    "almgren_chriss_trajectory",
    "contraction_constants",
    "cost_of_trajectory",
    "discretize_problem",
    "feedback_rate",
    "obizhaeva_wang_schedule",
    "oracle_value",
    "rho_zero_value",
    "scalar_A_tilde",
    "simulate_optimal",
    "solve_kkt",
    "solve_riccati",
    "validate_params",
    "value_function",
]
