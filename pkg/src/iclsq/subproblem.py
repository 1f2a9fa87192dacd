"""Step computation for the regularized quadratic model.

Each outer iteration minimizes

    q(s) = g.s + 0.5 * s.(H + gamma I).s

either exactly (tiny relative residual) or inexactly, stopping conjugate
gradient once the linear-system residual drops below

    theta * sqrt(gamma / (||H|| + gamma)) * ||g||.

Both variants run a Krylov method from the zero vector, so the model value
decreases monotonically and any returned step has positive predicted
decrease whenever g is nonzero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LinearOperator, as_vector, norm

__all__ = [
    "SubproblemSpec",
    "StepResult",
    "IndefiniteOperator",
    "estimate_operator_norm",
    "model_decrease",
    "exact_step",
    "truncated_cg_step",
]

_EPS = float(np.finfo(float).eps)


class IndefiniteOperator(RuntimeError):
    """Nonpositive curvature was detected where a PSD operator was promised."""


@dataclass
class SubproblemSpec:
    """One regularized model: gradient, curvature operator, and knobs.

    h_norm_estimate must be an upper bound on the spectral norm of H for the
    inexact termination rule to retain its guarantees; the power-iteration
    estimator below overshoots on purpose.

    When H is a Gauss-Newton composition, ``gn_factor`` (the underlying
    rectangular Jacobian operator) and ``gn_residual`` (the residual at the
    base point) may be supplied; the Krylov solve then runs in least-squares
    form, which is mathematically conjugate gradient on the same system with
    better floating-point behavior for small gamma. Iteration counts and
    per-iteration operator costs are identical: one forward and one transpose
    application each.
    """

    g: np.ndarray
    H: LinearOperator
    gamma: float
    theta: float
    h_norm_estimate: float
    gn_factor: LinearOperator | None = None
    gn_residual: np.ndarray | None = None

    def __post_init__(self):
        self.g = as_vector(self.g, name="gradient")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 <= self.theta < 1.0:
            raise ValueError(f"theta must lie in [0, 1), got {self.theta}")
        if self.h_norm_estimate < 0:
            raise ValueError("h_norm_estimate must be nonnegative")
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H has shape {self.H.shape}, expected {(n, n)}")
        if (self.gn_factor is None) != (self.gn_residual is None):
            raise ValueError("gn_factor and gn_residual must be supplied together")
        if self.gn_residual is not None:
            self.gn_residual = as_vector(self.gn_residual, name="gn_residual")


@dataclass
class StepResult:
    """Computed step plus the certificates the outer loop needs."""

    step: np.ndarray
    model_decrease: float
    residual_norm: float
    cg_iters: int
    mode: str


def estimate_operator_norm(H: LinearOperator, dim: int, seed: int = 0) -> float:
    """Safety-factored power-iteration estimate of the spectral norm.

    Thirty power iterations from a fixed-seed random start, Rayleigh
    quotient, then a 1.5x inflation so the result upper-bounds the true
    norm in practice. The zero operator is detected from the start vector
    and reported as exactly 0.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    hv = H @ v
    if norm(hv) <= 1e-300:
        return 0.0
    for _ in range(30):
        nv = np.linalg.norm(hv)
        if nv <= 1e-300:
            return 0.0
        v = hv / nv
        hv = H @ v
    return 1.5 * float(v @ hv)


def model_decrease(spec: SubproblemSpec, s) -> float:
    """Model decrease q(0) - q(s); costs one application of H."""
    s = as_vector(s, spec.g.shape[0], name="step")
    hs = spec.H @ s
    return float(-(spec.g @ s) - 0.5 * (s @ hs) - 0.5 * spec.gamma * (s @ s))


def _inexact_tolerance(spec: SubproblemSpec) -> float:
    """Residual target theta * sqrt(gamma / (||H|| + gamma)) * ||g||."""
    scale = math.sqrt(spec.gamma / (spec.h_norm_estimate + spec.gamma))
    return spec.theta * scale * norm(spec.g)


def _cg(spec: SubproblemSpec, tol: float, maxiter: int):
    """Conjugate gradient on (H + gamma I) s = -g from s = 0.

    Returns (s, residual_norm, iterations, (H + gamma I) s). Tracks the best
    iterate seen so a stagnating solve still returns its most accurate step.
    """
    g, gamma = spec.g, spec.gamma
    n = g.shape[0]
    x = np.zeros(n)
    ax = np.zeros(n)  # running (H + gamma I) x
    r = -g.copy()
    p = r.copy()
    rr = float(r @ r)
    best = (x.copy(), math.sqrt(rr), 0, ax.copy())
    stall = 0
    iters = 0
    while iters < maxiter:
        q = (spec.H @ p) + gamma * p
        pq = float(p @ q)
        if pq <= 0:
            raise IndefiniteOperator(
                f"nonpositive curvature {pq:.3e} encountered; the supplied "
                "operator is not positive semidefinite"
            )
        alpha = rr / pq
        x += alpha * p
        ax += alpha * q
        r -= alpha * q
        iters += 1
        rr_new = float(r @ r)
        res = math.sqrt(rr_new)
        if res < best[1]:
            best = (x.copy(), res, iters, ax.copy())
            stall = 0
        else:
            stall += 1
        if res <= tol:
            return x, res, iters, ax
        if stall >= 30:
            break  # rounding floor reached; return the best iterate
        p = r + (rr_new / rr) * p
        rr = rr_new
    bx, bres, _, bax = best
    return bx, bres, iters, bax


def _cgls(spec: SubproblemSpec, tol: float, maxiter: int):
    """Least-squares form of the same Krylov solve for factored curvature.

    Minimizes ||J s + R||^2 + gamma ||s||^2 with J the rectangular factor;
    the tracked quantity is the normal-equation residual -g - (H + gamma I)s,
    exactly the vector the inexactness rule bounds.
    """
    g, gamma = spec.g, spec.gamma
    factor, residual = spec.gn_factor, spec.gn_residual
    sqrt_gamma = math.sqrt(gamma)
    n = g.shape[0]
    x = np.zeros(n)
    r_top = -residual.copy()  # top block of b - A x with b = [-R; 0]
    r_bot = np.zeros(n)
    s_vec = -g.copy()  # A^T (b - A x)
    p = s_vec.copy()
    ss = float(s_vec @ s_vec)
    best = (x.copy(), math.sqrt(ss), 0, r_top.copy(), r_bot.copy())
    stall = 0
    iters = 0
    while iters < maxiter:
        q_top = factor @ p
        q_bot = sqrt_gamma * p
        qq = float(q_top @ q_top) + float(q_bot @ q_bot)
        if qq <= 0:
            raise IndefiniteOperator("zero curvature along a nonzero direction")
        alpha = ss / qq
        x += alpha * p
        r_top -= alpha * q_top
        r_bot -= alpha * q_bot
        s_vec = factor.rmatvec(r_top) + sqrt_gamma * r_bot
        iters += 1
        ss_new = float(s_vec @ s_vec)
        res = math.sqrt(ss_new)
        if res < best[1]:
            best = (x.copy(), res, iters, r_top.copy(), r_bot.copy())
            stall = 0
        else:
            stall += 1
        if res <= tol:
            return x, res, iters, r_top, r_bot
        if stall >= 30:
            break
        p = s_vec + (ss_new / ss) * p
        ss = ss_new
    bx, bres, _, btop, bbot = best
    return bx, bres, iters, btop, bbot


def _solve(spec: SubproblemSpec, tol: float, maxiter: int | None, mode: str) -> StepResult:
    g = spec.g
    n = g.shape[0]
    if maxiter is None:
        maxiter = 3 * n + 30
    if spec.gn_factor is not None:
        x, res, iters, r_top, r_bot = _cgls(spec, tol, maxiter)
        # A x = b - r, so s.(H + gamma I)s = ||A x||^2 without extra applies.
        ax_top = -spec.gn_residual - r_top
        ax_bot = -r_bot
        curv = float(ax_top @ ax_top) + float(ax_bot @ ax_bot)
        decrease = float(-(g @ x) - 0.5 * curv)
    else:
        x, res, iters, ax = _cg(spec, tol, maxiter)
        decrease = float(-(g @ x) - 0.5 * (x @ ax))
    return StepResult(
        step=x,
        model_decrease=decrease,
        residual_norm=res,
        cg_iters=iters,
        mode=mode,
    )


def exact_step(spec: SubproblemSpec, maxiter: int | None = None) -> StepResult:
    """Solve (H + gamma I) s = -g to a tiny relative residual.

    The target is min(1e-12, 1e-11 * sqrt(gamma / (||H|| + gamma))) times
    ||g||, floored at what the conditioning of the system makes attainable
    in floating point, so the solve never spins on an impossible tolerance.
    """
    gn = norm(spec.g)
    if gn == 0.0:
        raise ValueError("exact_step requires a nonzero gradient")
    kappa = (spec.h_norm_estimate + spec.gamma) / spec.gamma
    scale = math.sqrt(spec.gamma / (spec.h_norm_estimate + spec.gamma))
    tol = max(min(1e-12, 1e-11 * scale), 50.0 * _EPS * math.sqrt(kappa)) * gn
    return _solve(spec, tol, maxiter, mode="exact")


def truncated_cg_step(spec: SubproblemSpec, maxiter: int | None = None) -> StepResult:
    """Run CG until the relative-residual inexactness rule is met.

    The tolerance factor theta * sqrt(gamma / (||H|| + gamma)) is strictly
    below one, so at least one iteration always happens for a nonzero
    gradient.
    """
    if norm(spec.g) == 0.0:
        raise ValueError("truncated_cg_step requires a nonzero gradient")
    if spec.theta <= 0.0:
        raise ValueError("truncated_cg_step requires theta > 0; use exact_step")
    return _solve(spec, _inexact_tolerance(spec), maxiter, mode="inexact")
