"""Variance-reduced recursive momentum for stochastic compositional problems."""
from . import core, diagnostics, estimators, optimizer, planner, problems
from .core import CompositionalProblem, IndexBatch, sample_with_replacement
from .exceptions import (
    ConfigError,
    DomainViolationError,
    InfeasibleEpsilonError,
    InvalidArgumentError,
    InvalidConstantsError,
    InvalidProblemError,
    NumericalFailure,
    StormError,
)
from .optimizer import HyperParams, RunRecord, ScgdParams, run_scgd, run_storm_c
from .planner import ParameterPlan, ProblemConstants, condition_check, plan_exact, plan_order
from .solvers import SCGD, StormCompositional

__version__ = "0.1.0"

__all__ = [
    "CompositionalProblem",
    "ConfigError",
    "DomainViolationError",
    "HyperParams",
    "IndexBatch",
    "InfeasibleEpsilonError",
    "InvalidArgumentError",
    "InvalidConstantsError",
    "InvalidProblemError",
    "NumericalFailure",
    "ParameterPlan",
    "ProblemConstants",
    "RunRecord",
    "SCGD",
    "ScgdParams",
    "StormCompositional",
    "StormError",
    "condition_check",
    "core",
    "diagnostics",
    "estimators",
    "optimizer",
    "plan_exact",
    "plan_order",
    "planner",
    "problems",
    "run_scgd",
    "run_storm_c",
    "sample_with_replacement",
]
