"""Optimal control of a viscous nonlinear transport equation on (0, 1).

Backward Euler in time, piecewise linear elements in space on a uniform
mesh, homogeneous Dirichlet ends. Each time step is advanced with Newton's
method, and the linearized constraint is block lower bidiagonal in time, so
its (transposed) solves are forward (backward) substitutions over the time
blocks with one factorized spatial system each.

Unknowns for the implicit-problem contract are the states at steps 1..Nt;
the initial state is data. Controls carry Nt + 1 blocks including a block
for time zero that enters no constraint and is felt only through its
regularization term.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .core import ImplicitProblem, LinearOperator, StateSolveError, as_vector

__all__ = ["BurgersProblem"]


def _tridiag(nx: int, lower: float, diag: float, upper: float) -> np.ndarray:
    out = np.zeros((nx, nx))
    idx = np.arange(nx)
    out[idx, idx] = diag
    out[idx[:-1], idx[:-1] + 1] = upper
    out[idx[1:], idx[1:] - 1] = lower
    return out


class BurgersProblem(ImplicitProblem):
    """Distributed control of the discretized viscous transport dynamics.

    Parameters
    ----------
    nx, nt : spatial / temporal resolution (unit space and time horizons).
    nu : viscosity.
    omega : control regularization weight.
    y_init : initial state; defaults to a step profile with the first
        nx // 2 entries equal to one.
    z : desired state (time independent); defaults to the initial state.
    """

    def __init__(
        self,
        nx: int,
        nt: int,
        nu: float = 0.1,
        omega: float = 0.05,
        y_init=None,
        z=None,
        newton_tol: float = 1e-12,
        newton_max_iter: int = 25,
    ):
        if nx < 2 or nt < 1:
            raise ValueError(f"need nx >= 2 and nt >= 1, got nx={nx}, nt={nt}")
        if nu <= 0 or omega <= 0:
            raise ValueError("nu and omega must be positive")
        self.nx = int(nx)
        self.nt = int(nt)
        self.nu = float(nu)
        self.omega = float(omega)
        self.h = 1.0 / nx
        self.dt = 1.0 / nt
        self.M = (self.h / 6.0) * _tridiag(nx, 1.0, 4.0, 1.0)
        self.B = _tridiag(nx, -0.5, 0.0, 0.5)
        self.C = (1.0 / self.h) * _tridiag(nx, -1.0, 2.0, -1.0)
        self.f = np.zeros(nx)
        if y_init is None:
            y_init = np.zeros(nx)
            y_init[: nx // 2] = 1.0
        self.y0 = as_vector(y_init, nx, name="y_init").copy()
        self.z = self.y0.copy() if z is None else as_vector(z, nx, name="z").copy()
        self.newton_tol = float(newton_tol)
        self.newton_max_iter = int(newton_max_iter)
        self._sqrtM = np.linalg.cholesky(self.M).T  # upper factor, F^T F = M
        self._linearization = None  # (base state, per-step LU factors)

    # dimensions
    @property
    def n(self) -> int:
        return (self.nt + 1) * self.nx

    @property
    def n_y(self) -> int:
        return self.nt * self.nx

    @property
    def m(self) -> int:
        return 2 * (self.nt + 1) * self.nx

    @property
    def feasibility_tol(self) -> float:
        return 10.0 * self.newton_tol * math.sqrt(self.nt)

    # block helpers
    def control_blocks(self, u) -> np.ndarray:
        return as_vector(u, self.n, name="control").reshape(self.nt + 1, self.nx)

    def state_blocks(self, y) -> np.ndarray:
        return as_vector(y, self.n_y, name="state").reshape(self.nt, self.nx)

    def full_trajectory(self, y) -> np.ndarray:
        """States including the fixed initial block, (nt+1)*nx entries."""
        return np.concatenate([self.y0, as_vector(y, self.n_y, name="state")])

    # dynamics
    def step_residual(self, y_prev, y_next, u_next) -> np.ndarray:
        """Implicit time-step equation for one block."""
        y_prev = as_vector(y_prev, self.nx, name="y_prev")
        y_next = as_vector(y_next, self.nx, name="y_next")
        u_next = as_vector(u_next, self.nx, name="u_next")
        return (
            (self.M @ (y_next - y_prev)) / self.dt
            + 0.5 * (self.B @ (y_next * y_next))
            + self.nu * (self.C @ y_next)
            - self.f
            - self.M @ u_next
        )

    def step_jacobian(self, y_next) -> np.ndarray:
        """Derivative of the step equation in its unknown state."""
        y_next = as_vector(y_next, self.nx, name="y_next")
        return self.M / self.dt + self.B * y_next[np.newaxis, :] + self.nu * self.C

    def solve_state(self, u) -> np.ndarray:
        """March the dynamics with one Newton solve per time step.

        Counts as a single forward solve regardless of Newton iterations.
        """
        ub = self.control_blocks(u)
        out = np.empty((self.nt, self.nx))
        y_prev = self.y0
        for i in range(self.nt):
            v = y_prev.copy()  # warm start from the previous step
            converged = False
            for _ in range(self.newton_max_iter):
                res = self.step_residual(y_prev, v, ub[i + 1])
                if np.linalg.norm(res) <= self.newton_tol:
                    converged = True
                    break
                v = v - np.linalg.solve(self.step_jacobian(v), res)
            if not converged:
                res_norm = float(np.linalg.norm(self.step_residual(y_prev, v, ub[i + 1])))
                raise StateSolveError(
                    f"Newton failed at time step {i + 1}: residual {res_norm:.3e} "
                    f"after {self.newton_max_iter} iterations",
                    step_index=i + 1,
                    residual_norm=res_norm,
                )
            out[i] = v
            y_prev = v
        return out.ravel()

    def residual(self, y, u) -> np.ndarray:
        yb = self.state_blocks(y)
        ub = self.control_blocks(u)
        F = self._sqrtM
        sd = math.sqrt(self.dt)
        so = math.sqrt(self.omega * self.dt)
        parts = [sd * (F @ (self.y0 - self.z))]
        parts.extend(sd * (F @ (yb[i] - self.z)) for i in range(self.nt))
        parts.extend(so * (F @ ub[i]) for i in range(self.nt + 1))
        return np.concatenate(parts)

    def constraint_residual(self, y, u) -> np.ndarray:
        yb = self.state_blocks(y)
        ub = self.control_blocks(u)
        parts = []
        y_prev = self.y0
        for i in range(self.nt):
            parts.append(self.step_residual(y_prev, yb[i], ub[i + 1]))
            y_prev = yb[i]
        return np.concatenate(parts)

    # linearization, factored once per base state; the memo is swapped as a
    # single reference so concurrent runs sharing this instance stay correct
    def _factors(self, y):
        y = as_vector(y, self.n_y, name="state")
        memo = self._linearization
        if memo is not None and np.array_equal(memo[0], y):
            return memo[1]
        yb = y.reshape(self.nt, self.nx)
        factors = [sla.lu_factor(self.step_jacobian(yb[i])) for i in range(self.nt)]
        self._linearization = (y.copy(), factors)
        return factors

    def solve_cy(self, y, u, rhs) -> np.ndarray:
        """Block forward substitution through the time steps."""
        factors = self._factors(y)
        rb = as_vector(rhs, self.n_y, name="rhs").reshape(self.nt, self.nx)
        out = np.empty((self.nt, self.nx))
        coupling = self.M / self.dt
        prev = np.zeros(self.nx)
        for i in range(self.nt):
            out[i] = sla.lu_solve(factors[i], rb[i] + coupling @ prev)
            prev = out[i]
        return out.ravel()

    def solve_cy_transpose(self, y, u, rhs) -> np.ndarray:
        """Block backward substitution with the transposed step Jacobians."""
        factors = self._factors(y)
        rb = as_vector(rhs, self.n_y, name="rhs").reshape(self.nt, self.nx)
        out = np.empty((self.nt, self.nx))
        coupling = self.M / self.dt
        nxt = np.zeros(self.nx)
        for i in range(self.nt - 1, -1, -1):
            out[i] = sla.lu_solve(factors[i], rb[i] + coupling @ nxt, trans=1)
            nxt = out[i]
        return out.ravel()

    def op_cu(self, y, u) -> LinearOperator:
        nt, nx = self.nt, self.nx
        M = self.M

        def fwd(v):
            vb = v.reshape(nt + 1, nx)
            return (-(vb[1:] @ M.T)).ravel()  # block 0 enters no constraint

        def adj(w):
            wb = w.reshape(nt, nx)
            out = np.zeros((nt + 1, nx))
            out[1:] = -(wb @ M)  # M symmetric
            return out.ravel()

        return LinearOperator((self.n_y, self.n), fwd, adj)

    def op_Gy(self, y, u) -> LinearOperator:
        nt, nx = self.nt, self.nx
        F = self._sqrtM
        sd = math.sqrt(self.dt)

        def fwd(v):
            vb = v.reshape(nt, nx)
            out = np.zeros((2 * (nt + 1), nx))
            out[1 : nt + 1] = sd * (vb @ F.T)
            return out.ravel()

        def adj(w):
            wb = w.reshape(2 * (nt + 1), nx)
            return (sd * (wb[1 : nt + 1] @ F)).ravel()

        return LinearOperator((self.m, self.n_y), fwd, adj)

    def op_Gu(self, y, u) -> LinearOperator:
        nt, nx = self.nt, self.nx
        F = self._sqrtM
        so = math.sqrt(self.omega * self.dt)

        def fwd(v):
            vb = v.reshape(nt + 1, nx)
            out = np.zeros((2 * (nt + 1), nx))
            out[nt + 1 :] = so * (vb @ F.T)
            return out.ravel()

        def adj(w):
            wb = w.reshape(2 * (nt + 1), nx)
            return (so * (wb[nt + 1 :] @ F)).ravel()

        return LinearOperator((self.m, self.n), fwd, adj)
