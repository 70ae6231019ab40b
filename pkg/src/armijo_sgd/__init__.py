"""Mini-batch SGD with backtracking Armijo line search, its convergence-bound
constants, and batch-size sweep tooling."""

from .linesearch import ArmijoConfig, backtrack, armijo_holds, init_step, verify_counterexample
from .objectives import (
    FiniteSumObjective,
    full_gradient,
    full_value,
    make_counterexample,
    make_mlp_suite,
    make_nonconvex_suite,
    make_quadratic_suite,
)
from .optimizer import BatchSampler, RunTrace, StopRule, run_armijo_sgd, run_constant_sgd
from .theory import TheoryConstants, critical_batch, estimate_X_Ln, sfo_complexity, steps_needed

__version__ = "0.1.0"

__all__ = [
    "ArmijoConfig",
    "BatchSampler",
    "FiniteSumObjective",
    "RunTrace",
    "StopRule",
    "TheoryConstants",
    "armijo_holds",
    "backtrack",
    "critical_batch",
    "estimate_X_Ln",
    "full_gradient",
    "full_value",
    "init_step",
    "make_counterexample",
    "make_mlp_suite",
    "make_nonconvex_suite",
    "make_quadratic_suite",
    "run_armijo_sgd",
    "run_constant_sgd",
    "sfo_complexity",
    "steps_needed",
    "verify_counterexample",
]
