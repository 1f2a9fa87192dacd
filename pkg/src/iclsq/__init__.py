"""Matrix-free solver library for implicitly constrained least squares.

Provides the problem contract, the adjoint-based reduced Jacobian, exact and
truncated-CG step computation for the quadratically regularized model, the
accept/reject outer loop with full evaluation counting, two PDE-control
benchmark problems, and an experiment harness with a command line interface.
"""

from .adjoint import ReducedJacobian, reduced_gradient
from .burgers import BurgersProblem
from .core import (
    DimensionMismatch,
    EvalCounters,
    ImplicitProblem,
    LinearOperator,
    OperatorFailure,
    StateSolveError,
    inner,
    norm,
    objective,
    zero_operator,
)
from .elliptic import EllipticProblem
from .harness import (
    DEFAULT_THETA_GRID,
    ExperimentRow,
    ExperimentSpec,
    dense_jacobian_oracle,
    fd_gradient_oracle,
    render_table,
    run_experiment,
)
from .solver import (
    IterationTrace,
    SolveOutcome,
    SolverConfig,
    SolveStatus,
    default_gamma0,
    ratio,
    solve,
    stopping_check,
)
from .subproblem import (
    IndefiniteOperator,
    StepResult,
    SubproblemSpec,
    estimate_operator_norm,
    exact_step,
    model_decrease,
    truncated_cg_step,
)

__version__ = "0.1.0"

__all__ = [
    "BurgersProblem",
    "DEFAULT_THETA_GRID",
    "DimensionMismatch",
    "EllipticProblem",
    "EvalCounters",
    "ExperimentRow",
    "ExperimentSpec",
    "ImplicitProblem",
    "IndefiniteOperator",
    "IterationTrace",
    "LinearOperator",
    "OperatorFailure",
    "ReducedJacobian",
    "SolveOutcome",
    "SolveStatus",
    "SolverConfig",
    "StateSolveError",
    "StepResult",
    "SubproblemSpec",
    "default_gamma0",
    "dense_jacobian_oracle",
    "estimate_operator_norm",
    "exact_step",
    "fd_gradient_oracle",
    "inner",
    "model_decrease",
    "norm",
    "objective",
    "ratio",
    "reduced_gradient",
    "render_table",
    "run_experiment",
    "solve",
    "stopping_check",
    "truncated_cg_step",
    "zero_operator",
]
