"""Outer regularization loop for implicitly constrained least squares.

Levenberg-Marquardt style iteration: build a quadratic model of the reduced
objective with curvature H + gamma I, step, solve the constraint at the
trial control, and accept or reject on the ratio of actual to predicted
decrease. gamma halves (floored) after acceptance and doubles after
rejection. The run stops as soon as the residual norm or the scaled
gradient norm falls below its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .adjoint import ReducedJacobian
from .core import EvalCounters, ImplicitProblem, as_vector, norm, zero_operator
from .subproblem import (
    SubproblemSpec,
    estimate_operator_norm,
    exact_step,
    truncated_cg_step,
)

__all__ = [
    "SolveStatus",
    "SolverConfig",
    "IterationTrace",
    "SolveOutcome",
    "default_gamma0",
    "stopping_check",
    "ratio",
    "solve",
]

HESSIAN_MODES = ("zero", "gauss_newton")


class SolveStatus(str, Enum):
    CONVERGED_RESIDUAL = "converged_residual"
    CONVERGED_SCALED_GRADIENT = "converged_scaled_gradient"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class SolverConfig:
    """All knobs of the outer loop.

    gamma0 = None selects the scale-aware default max{1, ||g0||, ||u0||_inf + 1}
    computed from the initial gradient. theta = 0 requests near-exact steps;
    theta in (0, 1) is the relative inexactness of the truncated CG solve.
    """

    eps_R: float = 1e-6
    eps_g: float = 1e-4
    eta: float = 0.1
    gamma0: Optional[float] = None
    gamma_min: float = 1e-10
    theta: float = 0.0
    max_iter: int = 300
    hessian_mode: str = "gauss_newton"
    seed: int = 0
    record_iterates: bool = False

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.gamma0 is not None and self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if self.gamma_min <= 0:
            raise ValueError("gamma_min must be positive")
        if self.gamma0 is not None and self.gamma_min > self.gamma0:
            raise ValueError("gamma_min must not exceed gamma0")
        if not 0.0 <= self.theta < 1.0:
            raise ValueError(f"theta must lie in [0, 1), got {self.theta}")
        if self.eps_R <= 0 or self.eps_g <= 0:
            raise ValueError("eps_R and eps_g must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.hessian_mode not in HESSIAN_MODES:
            raise ValueError(f"hessian_mode must be one of {HESSIAN_MODES}")


@dataclass
class IterationTrace:
    """Record of one outer iteration, successful or not."""

    k: int
    gamma: float
    residual_norm: float
    grad_norm: float
    scaled_gradient: float
    model_decrease: float
    actual_decrease: float
    rho: Optional[float]
    success: bool
    cg_iters: int
    step_norm: float
    step_residual_norm: float
    counters: dict = field(default_factory=dict)
    note: str = ""
    u: Optional[np.ndarray] = None  # populated only when record_iterates is set

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "gamma": self.gamma,
            "residual_norm": self.residual_norm,
            "grad_norm": self.grad_norm,
            "scaled_gradient": self.scaled_gradient,
            "model_decrease": self.model_decrease,
            "actual_decrease": self.actual_decrease,
            "rho": self.rho,
            "success": self.success,
            "cg_iters": self.cg_iters,
            "step_norm": self.step_norm,
            "step_residual_norm": self.step_residual_norm,
            "counters": dict(self.counters),
            "note": self.note,
        }


@dataclass
class SolveOutcome:
    status: SolveStatus
    u: np.ndarray
    y: np.ndarray
    residual: np.ndarray
    gradient: np.ndarray
    gamma: float
    iterations: int
    successes: int
    trace: list[IterationTrace]
    counters: EvalCounters

    @property
    def residual_norm(self) -> float:
        return norm(self.residual)

    @property
    def scaled_gradient(self) -> float:
        rn = self.residual_norm
        return norm(self.gradient) / rn if rn > 0 else 0.0


def default_gamma0(g0, u0) -> float:
    """Initial regularization weight max{1, ||g0||, ||u0||_inf + 1}."""
    g0 = as_vector(g0, name="g0")
    u0 = as_vector(u0, name="u0")
    u_inf = float(np.max(np.abs(u0))) if u0.size else 0.0
    return max(1.0, norm(g0), u_inf + 1.0)


def stopping_check(R, g, eps_R: float, eps_g: float) -> Optional[SolveStatus]:
    """Termination test; the residual branch is checked first.

    A zero residual therefore never reaches the scaled-gradient division.
    """
    rn = norm(R)
    if rn <= eps_R:
        return SolveStatus.CONVERGED_RESIDUAL
    if norm(g) / rn <= eps_g:
        return SolveStatus.CONVERGED_SCALED_GRADIENT
    return None


def ratio(actual_decrease: float, predicted_decrease: float) -> float:
    """Ratio of actual to predicted decrease."""
    if predicted_decrease <= 0:
        raise ValueError(
            f"predicted decrease must be positive, got {predicted_decrease}; "
            "this indicates a broken step computation"
        )
    return actual_decrease / predicted_decrease


def solve(
    problem: ImplicitProblem,
    u0,
    config: SolverConfig,
    counters: EvalCounters | None = None,
    trace_sink: Callable[[IterationTrace], None] | None = None,
) -> SolveOutcome:
    """Run the outer loop from u0 until convergence or budget exhaustion.

    One forward solve happens at u0 and one per trial point, so the forward
    counter always equals the number of completed iterations plus one. The
    gradient is recomputed only after accepted steps; with the zero curvature
    mode the adjoint counter is exactly 1 + number of successes.
    """
    u = as_vector(u0, problem.n, name="u0").copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("u0 must be finite")
    if counters is None:
        counters = EvalCounters()

    y = problem.solve_state(u)
    counters.forward_solves += 1
    R = problem.residual(y, u)
    jac = ReducedJacobian(problem, u, y, counters)
    g = jac.gradient(R)

    gamma = config.gamma0 if config.gamma0 is not None else default_gamma0(g, u)
    if config.gamma_min > gamma:
        raise ValueError(
            f"gamma_min={config.gamma_min} exceeds the initial gamma {gamma}"
        )

    gauss_newton = config.hessian_mode == "gauss_newton"
    h_norm = None  # refreshed whenever the base point moves
    trace: list[IterationTrace] = []
    status: Optional[SolveStatus] = None

    for k in range(config.max_iter):
        status = stopping_check(R, g, config.eps_R, config.eps_g)
        if status is not None:
            break

        if gauss_newton:
            if h_norm is None:
                # Norm probes emulate a known curvature bound; they run on an
                # uncounted view so evaluation tallies match the cost model.
                h_norm = estimate_operator_norm(
                    jac.uncounted().gauss_newton_operator(), problem.n, config.seed
                )
            spec = SubproblemSpec(
                g=g,
                H=jac.gauss_newton_operator(),
                gamma=gamma,
                theta=config.theta,
                h_norm_estimate=h_norm,
                gn_factor=jac.as_operator(),
                gn_residual=R,
            )
        else:
            h_norm = 0.0
            spec = SubproblemSpec(
                g=g,
                H=zero_operator(problem.n),
                gamma=gamma,
                theta=config.theta,
                h_norm_estimate=0.0,
            )

        step = exact_step(spec) if config.theta == 0.0 else truncated_cg_step(spec)
        counters.cg_iterations += step.cg_iters

        u_trial = u + step.step
        y_trial = problem.solve_state(u_trial)
        counters.forward_solves += 1
        R_trial = problem.residual(y_trial, u_trial)

        j_cur = 0.5 * float(R @ R)
        j_trial = 0.5 * float(R_trial @ R_trial)
        actual = j_cur - j_trial
        predicted = step.model_decrease

        note = ""
        if predicted <= 0.0:
            # Underflow near convergence; reject and grow gamma instead of
            # failing the run.
            rho = None
            success = False
            note = "nonpositive predicted decrease, iteration rejected"
        else:
            rho = ratio(actual, predicted)
            success = rho >= config.eta

        rn = norm(R)
        trace_rec = IterationTrace(
            k=k,
            gamma=gamma,
            residual_norm=rn,
            grad_norm=norm(g),
            scaled_gradient=norm(g) / rn,
            model_decrease=predicted,
            actual_decrease=actual,
            rho=rho,
            success=success,
            cg_iters=step.cg_iters,
            step_norm=norm(step.step),
            step_residual_norm=step.residual_norm,
            counters=counters.snapshot(),
            note=note,
            u=u.copy() if config.record_iterates else None,
        )
        trace.append(trace_rec)
        if trace_sink is not None:
            trace_sink(trace_rec)

        if success:
            u, y, R = u_trial, y_trial, R_trial
            jac = ReducedJacobian(problem, u, y, counters)
            g = jac.gradient(R)
            gamma = max(0.5 * gamma, config.gamma_min)
            h_norm = None
        else:
            gamma = 2.0 * gamma

    if status is None:
        status = stopping_check(R, g, config.eps_R, config.eps_g)
    if status is None:
        status = SolveStatus.BUDGET_EXHAUSTED

    return SolveOutcome(
        status=status,
        u=u,
        y=y,
        residual=R,
        gradient=g,
        gamma=gamma,
        iterations=len(trace),
        successes=sum(1 for t in trace if t.success),
        trace=trace,
        counters=counters,
    )
