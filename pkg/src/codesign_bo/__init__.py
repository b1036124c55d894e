"""Batch Bayesian optimisation for nested plant/controller co-design."""

from codesign_bo.bayesopt import (
    BoConfig,
    ConvergenceCriterion,
    Objective,
    OptimizationTrace,
    check_convergence,
    optimize,
    run_batch_bo,
    run_sequential_bo,
)
from codesign_bo.codesign import CoDesignConfig, CoDesignResult, InnerConfig, inner_loop_optimize, run_codesign
from codesign_bo.domain import BoxDomain
from codesign_bo.econ import EconParams, batch_cost, campaign_cost, economies_report
from codesign_bo.gp import Dataset, FitConfig, GpModel, Hyperparameters, condition, fit

__version__ = "0.1.0"

__all__ = [
    "BoConfig",
    "BoxDomain",
    "CoDesignConfig",
    "CoDesignResult",
    "ConvergenceCriterion",
    "Dataset",
    "EconParams",
    "FitConfig",
    "GpModel",
    "Hyperparameters",
    "InnerConfig",
    "Objective",
    "OptimizationTrace",
    "batch_cost",
    "campaign_cost",
    "check_convergence",
    "condition",
    "economies_report",
    "fit",
    "inner_loop_optimize",
    "optimize",
    "run_batch_bo",
    "run_codesign",
    "run_sequential_bo",
]
