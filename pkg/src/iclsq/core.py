"""Problem contract and shared numerical primitives.

The solver stack is matrix free: a problem exposes its constraint and
residual Jacobians only through operator actions, and every inner linear
solve is tallied in an explicit counter object owned by the caller, never
in global state.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DimensionMismatch",
    "OperatorFailure",
    "StateSolveError",
    "as_vector",
    "inner",
    "norm",
    "LinearOperator",
    "zero_operator",
    "EvalCounters",
    "ImplicitProblem",
    "objective",
]


class DimensionMismatch(ValueError):
    """Vector or operator dimensions violate the problem contract."""


class OperatorFailure(RuntimeError):
    """An operator application failed, typically inside an inner linear solve."""

    def __init__(self, message: str, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic


class StateSolveError(RuntimeError):
    """The constraint could not be solved for the state."""

    def __init__(self, message: str, step_index=None, residual_norm=None):
        super().__init__(message)
        self.step_index = step_index
        self.residual_norm = residual_norm


def as_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce ``x`` to a 1-d float array, optionally enforcing its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-d, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatch(f"{name} has length {v.shape[0]}, expected {dim}")
    return v


def inner(a, b) -> float:
    """Euclidean inner product of two equally sized vectors."""
    a = as_vector(a, name="a")
    b = as_vector(b, a.shape[0], name="b")
    return float(a @ b)


def norm(a) -> float:
    """Euclidean norm."""
    return float(np.linalg.norm(as_vector(a, name="a")))


class LinearOperator:
    """Matrix-free linear map with explicit forward and transpose actions.

    Instances must satisfy the adjoint identity <A v, w> == <v, A^T w>;
    the test suite probes this on random vectors for every operator a
    problem exposes.
    """

    def __init__(
        self,
        shape: tuple[int, int],
        matvec: Callable[[np.ndarray], np.ndarray],
        rmatvec: Callable[[np.ndarray], np.ndarray],
    ):
        self.shape = (int(shape[0]), int(shape[1]))
        self._matvec = matvec
        self._rmatvec = rmatvec

    def matvec(self, v) -> np.ndarray:
        v = as_vector(v, self.shape[1], name="operator input")
        out = as_vector(self._matvec(v), name="operator output")
        if out.shape[0] != self.shape[0]:
            raise DimensionMismatch(
                f"operator produced length {out.shape[0]}, expected {self.shape[0]}"
            )
        return out

    def rmatvec(self, w) -> np.ndarray:
        w = as_vector(w, self.shape[0], name="transpose input")
        out = as_vector(self._rmatvec(w), name="transpose output")
        if out.shape[0] != self.shape[1]:
            raise DimensionMismatch(
                f"transpose produced length {out.shape[0]}, expected {self.shape[1]}"
            )
        return out

    def __matmul__(self, v) -> np.ndarray:
        return self.matvec(v)


def zero_operator(n_rows: int, n_cols: int | None = None) -> LinearOperator:
    """The zero map, used for the gradient-like solver variant."""
    n_cols = n_rows if n_cols is None else n_cols
    return LinearOperator(
        (n_rows, n_cols),
        lambda v: np.zeros(n_rows),
        lambda w: np.zeros(n_cols),
    )


@dataclass
class EvalCounters:
    """Monotone tally of the costly operations of a single solver run.

    forward_solves counts nonlinear constraint solves for the state,
    linearized_solves and adjoint_solves count solves with the constraint
    Jacobian and its transpose, jacobian_applies counts applications of the
    reduced residual Jacobian or its transpose, and cg_iterations sums the
    inner Krylov iterations of all step computations.
    """

    forward_solves: int = 0
    adjoint_solves: int = 0
    linearized_solves: int = 0
    jacobian_applies: int = 0
    cg_iterations: int = 0

    def snapshot(self) -> dict:
        return asdict(self)


class ImplicitProblem(ABC):
    """A least-squares objective 0.5*||R(y, u)||^2 constrained by c(y, u) = 0.

    The constraint is uniquely solvable for the state y given the control u,
    and its state Jacobian is square and invertible along the solution path.
    Implementations expose partial Jacobians of R and c as operator actions
    only; dense assembly exists solely as a testing oracle in the harness.

    Evaluations must be pure functions of (y, u) so distinct solver runs can
    share one instance concurrently.
    """

    @property
    @abstractmethod
    def n(self) -> int:
        """Control dimension."""

    @property
    @abstractmethod
    def n_y(self) -> int:
        """State dimension."""

    @property
    @abstractmethod
    def m(self) -> int:
        """Residual dimension."""

    @property
    def p(self) -> int:
        """Constraint dimension; equals the state dimension."""
        return self.n_y

    @property
    @abstractmethod
    def feasibility_tol(self) -> float:
        """Bound on ||c(solve_state(u), u)|| honored for moderate controls."""

    @abstractmethod
    def solve_state(self, u: np.ndarray) -> np.ndarray:
        """Solve c(y, u) = 0 for y. Callers tally this as one forward solve."""

    @abstractmethod
    def residual(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate R(y, u)."""

    @abstractmethod
    def op_Gu(self, y: np.ndarray, u: np.ndarray) -> LinearOperator:
        """Jacobian of R with respect to the control, as an operator."""

    @abstractmethod
    def op_Gy(self, y: np.ndarray, u: np.ndarray) -> LinearOperator:
        """Jacobian of R with respect to the state, as an operator."""

    @abstractmethod
    def op_cu(self, y: np.ndarray, u: np.ndarray) -> LinearOperator:
        """Jacobian of c with respect to the control, as an operator."""

    @abstractmethod
    def solve_cy(self, y: np.ndarray, u: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve the linearized constraint c_y(y, u) x = rhs."""

    @abstractmethod
    def solve_cy_transpose(self, y: np.ndarray, u: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve the transposed linearized constraint c_y(y, u)^T x = rhs."""

    @abstractmethod
    def constraint_residual(self, y: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate c(y, u) directly. Test-only feasibility probe."""


def objective(problem: ImplicitProblem, y, u) -> float:
    """Least-squares objective 0.5*||R(y, u)||^2."""
    y = as_vector(y, problem.n_y, name="state")
    u = as_vector(u, problem.n, name="control")
    r = problem.residual(y, u)
    return 0.5 * float(r @ r)
