"""Core contract: vectors, operators, counters, objective."""

import numpy as np
import pytest

from iclsq.core import (
    DimensionMismatch,
    EvalCounters,
    inner,
    norm,
    objective,
    zero_operator,
)
from iclsq.elliptic import EllipticProblem
from iclsq.solver import SolverConfig, solve

from conftest import IdentityProblem, assert_adjoint_identity, operator_from_matrix


class TestInnerNorm:
    def test_orthogonal(self):
        assert inner([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_three_four_five(self):
        assert norm([3.0, 4.0]) == pytest.approx(5.0)

    def test_canonical_basis(self):
        for i in range(5):
            e = np.zeros(5)
            e[i] = 1.0
            assert norm(e) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            inner([1.0, 2.0], [1.0, 2.0, 3.0])


class TestObjective:
    def test_zero_residual(self):
        prob = IdentityProblem(3)
        assert objective(prob, np.zeros(3), np.zeros(3)) == 0.0

    def test_three_four(self):
        prob = IdentityProblem(2)
        assert objective(prob, np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(12.5)

    def test_elliptic_all_zero(self):
        prob = EllipticProblem(4, z_choice="zero")
        u = np.zeros(prob.n)
        y = prob.solve_state(u)
        assert objective(prob, y, u) == 0.0

    def test_dimension_mismatch(self):
        prob = IdentityProblem(3)
        with pytest.raises(DimensionMismatch):
            objective(prob, np.zeros(4), np.zeros(3))


class TestLinearOperator:
    def test_matmul_and_transpose(self, rng):
        A = rng.standard_normal((4, 3))
        op = operator_from_matrix(A)
        v = rng.standard_normal(3)
        np.testing.assert_allclose(op @ v, A @ v)
        w = rng.standard_normal(4)
        np.testing.assert_allclose(op.rmatvec(w), A.T @ w)

    def test_input_dimension_checked(self, rng):
        op = operator_from_matrix(rng.standard_normal((4, 3)))
        with pytest.raises(DimensionMismatch):
            op.matvec(np.zeros(4))
        with pytest.raises(DimensionMismatch):
            op.rmatvec(np.zeros(3))

    def test_zero_operator(self):
        op = zero_operator(3, 5)
        np.testing.assert_array_equal(op @ np.ones(5), np.zeros(3))
        np.testing.assert_array_equal(op.rmatvec(np.ones(3)), np.zeros(5))

    def test_adjoint_probes_random_matrix(self, rng):
        assert_adjoint_identity(operator_from_matrix(rng.standard_normal((6, 4))), rng)


class TestProblemOperators:
    """Every operator a problem exposes must pass the adjoint probe."""

    def test_elliptic_operator_adjoints(self, rng):
        prob = EllipticProblem(4, z_choice="one")
        u = rng.standard_normal(prob.n)
        y = prob.solve_state(u)
        for op in (prob.op_Gu(y, u), prob.op_Gy(y, u), prob.op_cu(y, u)):
            assert_adjoint_identity(op, rng)

    def test_burgers_operator_adjoints(self, rng):
        from iclsq.burgers import BurgersProblem

        prob = BurgersProblem(4, 4, nu=0.1)
        u = 0.2 * rng.standard_normal(prob.n)
        y = prob.solve_state(u)
        for op in (prob.op_Gu(y, u), prob.op_Gy(y, u), prob.op_cu(y, u)):
            assert_adjoint_identity(op, rng)

    def test_elliptic_feasibility(self, rng):
        prob = EllipticProblem(5)
        u = rng.standard_normal(prob.n)
        y = prob.solve_state(u)
        c = prob.constraint_residual(y, u)
        assert np.linalg.norm(c) <= prob.feasibility_tol * (1.0 + np.linalg.norm(u))


class TestCounters:
    def test_snapshot_is_plain_dict(self):
        c = EvalCounters(forward_solves=2)
        snap = c.snapshot()
        assert snap == {
            "forward_solves": 2,
            "adjoint_solves": 0,
            "linearized_solves": 0,
            "jacobian_applies": 0,
            "cg_iterations": 0,
        }
        c.forward_solves += 1
        assert snap["forward_solves"] == 2

    def test_two_identical_runs_count_identically(self):
        prob = EllipticProblem(5, z_choice="one")
        cfg = SolverConfig(eps_R=1e-2, eps_g=1e-4, theta=1e-2)
        u0 = np.ones(prob.n)
        first = solve(prob, u0, cfg)
        second = solve(prob, u0, cfg)
        assert first.counters.snapshot() == second.counters.snapshot()
        assert first.iterations == second.iterations
