"""Tracking control of a Poisson problem on the unit square.

Piecewise linear finite elements on the uniform right-triangle mesh (every
grid cell split along its southwest-northeast diagonal), homogeneous
Dirichlet data eliminated so only interior nodes remain. The constraint is
the linear system K y = M u + f and the residual stacks the mass-weighted
state mismatch over the sqrt-weighted control regularization, which makes
the reduced objective exactly quadratic.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ImplicitProblem, LinearOperator, as_vector

__all__ = ["assemble_p1_matrices", "EllipticProblem"]


def _element_matrices(coords: np.ndarray):
    """Stiffness and mass element matrices for one P1 triangle."""
    x, y = coords[:, 0], coords[:, 1]
    two_area = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0])
    area = 0.5 * abs(two_area)
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    k_e = (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)
    m_e = (area / 12.0) * (np.ones((3, 3)) + np.eye(3))
    return k_e, m_e


def assemble_p1_matrices(N: int):
    """Assemble full-node stiffness and mass matrices on the N x N grid.

    Returns (K, M, interior) where K and M are CSR matrices over all
    (N+1)^2 nodes and ``interior`` indexes the (N-1)^2 non-boundary nodes
    in row-major order.
    """
    if N < 2:
        raise ValueError(f"need at least 2 subdivisions per side, got {N}")
    h = 1.0 / N
    n_side = N + 1

    def node(i, j):
        return j * n_side + i

    rows, cols, k_data, m_data = [], [], [], []
    # The two triangle shapes repeat across the mesh; compute them once.
    lower = _element_matrices(np.array([[0, 0], [h, 0], [h, h]], dtype=float))
    upper = _element_matrices(np.array([[0, 0], [h, h], [0, h]], dtype=float))
    for j in range(N):
        for i in range(N):
            tri_lower = [node(i, j), node(i + 1, j), node(i + 1, j + 1)]
            tri_upper = [node(i, j), node(i + 1, j + 1), node(i, j + 1)]
            for tri, (k_e, m_e) in ((tri_lower, lower), (tri_upper, upper)):
                for a in range(3):
                    for b in range(3):
                        rows.append(tri[a])
                        cols.append(tri[b])
                        k_data.append(k_e[a, b])
                        m_data.append(m_e[a, b])
    n_nodes = n_side * n_side
    K = sp.csr_matrix((k_data, (rows, cols)), shape=(n_nodes, n_nodes))
    M = sp.csr_matrix((m_data, (rows, cols)), shape=(n_nodes, n_nodes))
    interior = np.array(
        [node(i, j) for j in range(1, N) for i in range(1, N)], dtype=int
    )
    return K, M, interior


class EllipticProblem(ImplicitProblem):
    """Linear-constraint tracking benchmark on the unit square.

    Parameters
    ----------
    N : subdivisions per side; the control/state dimension is (N-1)^2.
    lam : control regularization weight.
    z_choice : "zero" or "one", the desired state (zero gives a problem
        with an exact zero-residual solution, one a large-residual one).
    sqrt_factor : optional override for the mass square-root factor F with
        F^T F = M; defaults to the transposed Cholesky factor. Any such F
        yields the same residual norm, gradient, and curvature.
    """

    def __init__(self, N: int, lam: float = 1e-3, z_choice: str = "zero", sqrt_factor=None):
        if lam <= 0:
            raise ValueError("lam must be positive")
        if z_choice not in ("zero", "one"):
            raise ValueError(f"z_choice must be 'zero' or 'one', got {z_choice!r}")
        K_full, M_full, interior = assemble_p1_matrices(N)
        self.N = N
        self._n = (N - 1) ** 2
        self.lam = float(lam)
        self.K = K_full[np.ix_(interior, interior)].tocsc()
        self.M = M_full[np.ix_(interior, interior)].tocsr()
        if sqrt_factor is None:
            chol = np.linalg.cholesky(self.M.toarray())
            self._sqrtM = sp.csr_matrix(chol.T)  # upper factor, F^T F = M
        else:
            self._sqrtM = sqrt_factor
        self.z = np.zeros(self._n) if z_choice == "zero" else np.ones(self._n)
        self.f = np.zeros(self._n)
        self._K_lu = spla.splu(self.K)

    # dimensions
    @property
    def n(self) -> int:
        return self._n

    @property
    def n_y(self) -> int:
        return self._n

    @property
    def m(self) -> int:
        return 2 * self._n

    @property
    def feasibility_tol(self) -> float:
        # Direct sparse factorization; residuals sit at rounding level.
        return 1e-10

    def solve_state(self, u) -> np.ndarray:
        u = as_vector(u, self._n, name="control")
        return self._K_lu.solve(self.M @ u + self.f)

    def residual(self, y, u) -> np.ndarray:
        y = as_vector(y, self._n, name="state")
        u = as_vector(u, self._n, name="control")
        return np.concatenate(
            [self._sqrtM @ (y - self.z), math.sqrt(self.lam) * (self._sqrtM @ u)]
        )

    def constraint_residual(self, y, u) -> np.ndarray:
        y = as_vector(y, self._n, name="state")
        u = as_vector(u, self._n, name="control")
        return self.K @ y - self.M @ u - self.f

    def op_Gy(self, y, u) -> LinearOperator:
        n = self._n
        F = self._sqrtM

        def fwd(v):
            return np.concatenate([F @ v, np.zeros(n)])

        def adj(w):
            return F.T @ w[:n]

        return LinearOperator((2 * n, n), fwd, adj)

    def op_Gu(self, y, u) -> LinearOperator:
        n = self._n
        F = self._sqrtM
        s = math.sqrt(self.lam)

        def fwd(v):
            return np.concatenate([np.zeros(n), s * (F @ v)])

        def adj(w):
            return s * (F.T @ w[n:])

        return LinearOperator((2 * n, n), fwd, adj)

    def op_cu(self, y, u) -> LinearOperator:
        n = self._n
        M = self.M
        return LinearOperator((n, n), lambda v: -(M @ v), lambda w: -(M @ w))

    def solve_cy(self, y, u, rhs) -> np.ndarray:
        rhs = as_vector(rhs, self._n, name="rhs")
        return self._K_lu.solve(rhs)

    def solve_cy_transpose(self, y, u, rhs) -> np.ndarray:
        # K is symmetric, so the transposed solve reuses the same factor.
        rhs = as_vector(rhs, self._n, name="rhs")
        return self._K_lu.solve(rhs)
