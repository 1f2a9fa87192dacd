"""Experiment runner, replication grids, verification oracles, and the CLI.

Runs the solver over a grid of inexactness levels and stopping tolerances,
mirroring the benchmark tables: one row of the rendered grid per tolerance
pair, one column per theta, counts of forward solves or Jacobian products in
the cells, a dash where the budget ran out. Also home to the finite
difference and dense-assembly oracles the test suite checks the adjoint
machinery against.
"""

from __future__ import annotations

import argparse
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adjoint import ReducedJacobian
from .burgers import BurgersProblem
from .core import EvalCounters, ImplicitProblem
from .elliptic import EllipticProblem
from .solver import SolverConfig, SolveStatus, solve

__all__ = [
    "DEFAULT_THETA_GRID",
    "ExperimentSpec",
    "ExperimentRow",
    "build_problem",
    "default_control",
    "fd_gradient_oracle",
    "dense_jacobian_oracle",
    "run_experiment",
    "render_table",
    "summary_csv",
    "main",
]

DEFAULT_THETA_GRID = (0.0, 1e-6, 1e-4, 1e-2, 1e-1, 5e-1)

# Conventions recorded atop every emitted CSV.
CSV_PREAMBLE = (
    "# jvp counts every application of the reduced Jacobian or its transpose,\n"
    "# so one Gauss-Newton curvature product costs 2; the initial gradient's\n"
    "# transpose application is included, curvature-norm probes are not.\n"
    "# pde_solves includes the solve at the starting control.\n"
)

SUMMARY_COLUMNS = (
    "problem",
    "theta",
    "eps_r",
    "eps_g",
    "status",
    "iterations",
    "successes",
    "pde_solves",
    "adjoint_solves",
    "jvp",
    "cg_iters",
    "final_residual_norm",
    "final_scaled_gradient",
    "wall_ms",
)


@dataclass
class ExperimentSpec:
    """One table-style sweep: a problem plus tolerance and theta grids."""

    problem: str
    problem_params: dict = field(default_factory=dict)
    theta_grid: tuple = DEFAULT_THETA_GRID
    eps_grid: tuple = ()
    max_iter: int = 300
    hessian_mode: str = "gauss_newton"
    eta: float = 0.1
    gamma_min: float = 1e-10
    seed: int = 0
    out_dir: Path | None = None

    def __post_init__(self):
        if self.problem not in ("elliptic", "burgers"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if len(self.theta_grid) == 0:
            raise ValueError("theta grid must not be empty")
        if len(self.eps_grid) == 0:
            raise ValueError("tolerance grid must not be empty")


@dataclass
class ExperimentRow:
    problem: str
    theta: float
    eps_r: float
    eps_g: float
    status: str
    iterations: int
    successes: int
    pde_solves: int
    adjoint_solves: int
    jvp: int
    cg_iters: int
    final_residual_norm: float
    final_scaled_gradient: float
    wall_ms: float


def build_problem(name: str, params: dict) -> ImplicitProblem:
    if name == "elliptic":
        return EllipticProblem(
            N=params.get("n_mesh", 20),
            lam=params.get("lam", 1e-3),
            z_choice=params.get("z", "zero"),
        )
    if name == "burgers":
        return BurgersProblem(
            nx=params.get("nx", 16),
            nt=params.get("nt", 16),
            nu=params.get("nu", 0.1),
            omega=params.get("omega", 0.05),
        )
    raise ValueError(f"unknown problem {name!r}")


def default_control(problem: ImplicitProblem, name: str) -> np.ndarray:
    """Benchmark starting controls: all ones (elliptic) or zero (burgers)."""
    return np.ones(problem.n) if name == "elliptic" else np.zeros(problem.n)


def fd_gradient_oracle(problem: ImplicitProblem, u, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the reduced objective.

    Costs two forward solves per control coordinate; strictly a testing
    oracle for the adjoint gradient.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    u = np.asarray(u, dtype=float)

    def reduced_value(point):
        y = problem.solve_state(point)
        r = problem.residual(y, point)
        return 0.5 * float(r @ r)

    grad = np.zeros(problem.n)
    for i in range(problem.n):
        bump = np.zeros(problem.n)
        bump[i] = step
        grad[i] = (reduced_value(u + bump) - reduced_value(u - bump)) / (2.0 * step)
    return grad


def dense_jacobian_oracle(problem: ImplicitProblem, u) -> np.ndarray:
    """Assemble the reduced Jacobian column by column on basis vectors."""
    if problem.n * problem.m > 10_000:
        raise ValueError(
            f"dense assembly guard: {problem.n} x {problem.m} exceeds 10^4 entries"
        )
    u = np.asarray(u, dtype=float)
    y = problem.solve_state(u)
    jac = ReducedJacobian(problem, u, y)
    out = np.zeros((problem.m, problem.n))
    for j in range(problem.n):
        e = np.zeros(problem.n)
        e[j] = 1.0
        out[:, j] = jac.apply(e)
    return out


def _cell_tag(spec: ExperimentSpec, theta: float, eps_r: float, eps_g: float) -> str:
    return f"{spec.problem}_theta{theta:g}_epsr{eps_r:g}_epsg{eps_g:g}"


def _run_cell(problem, spec, theta, eps_r, eps_g, sink) -> tuple[ExperimentRow, bool]:
    config = SolverConfig(
        eps_R=eps_r,
        eps_g=eps_g,
        eta=spec.eta,
        gamma_min=spec.gamma_min,
        theta=theta,
        max_iter=spec.max_iter,
        hessian_mode=spec.hessian_mode,
        seed=spec.seed,
    )
    u0 = default_control(problem, spec.problem)
    counters = EvalCounters()
    start = time.perf_counter()
    try:
        outcome = solve(problem, u0, config, counters=counters, trace_sink=sink)
        failed = False
    except Exception:
        outcome = None
        failed = True
    wall_ms = 1000.0 * (time.perf_counter() - start)
    if failed:
        row = ExperimentRow(
            problem=spec.problem,
            theta=theta,
            eps_r=eps_r,
            eps_g=eps_g,
            status="error",
            iterations=0,
            successes=0,
            pde_solves=counters.forward_solves,
            adjoint_solves=counters.adjoint_solves,
            jvp=counters.jacobian_applies,
            cg_iters=counters.cg_iterations,
            final_residual_norm=float("nan"),
            final_scaled_gradient=float("nan"),
            wall_ms=wall_ms,
        )
        return row, True
    row = ExperimentRow(
        problem=spec.problem,
        theta=theta,
        eps_r=eps_r,
        eps_g=eps_g,
        status=outcome.status.value,
        iterations=outcome.iterations,
        successes=outcome.successes,
        pde_solves=counters.forward_solves,
        adjoint_solves=counters.adjoint_solves,
        jvp=counters.jacobian_applies,
        cg_iters=counters.cg_iterations,
        final_residual_norm=outcome.residual_norm,
        final_scaled_gradient=outcome.scaled_gradient,
        wall_ms=wall_ms,
    )
    return row, False


def run_experiment(spec: ExperimentSpec) -> list[ExperimentRow]:
    """Run every grid cell with fresh counters; write CSVs and traces.

    Cells are independent; a failing cell is recorded with status "error"
    and the sweep continues. Output is deterministic apart from wall times.
    """
    problem = build_problem(spec.problem, spec.problem_params)
    out_dir = Path(spec.out_dir) if spec.out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[ExperimentRow] = []
    for eps_r, eps_g in spec.eps_grid:
        for theta in spec.theta_grid:
            trace_file = None
            sink = None
            if out_dir is not None:
                tag = _cell_tag(spec, theta, eps_r, eps_g)
                trace_file = open(out_dir / f"trace_{tag}.jsonl", "w")
                sink = lambda rec, fh=trace_file: fh.write(
                    json.dumps(rec.to_dict(), sort_keys=True) + "\n"
                )
            try:
                row, _ = _run_cell(problem, spec, theta, eps_r, eps_g, sink)
            finally:
                if trace_file is not None:
                    trace_file.close()
            rows.append(row)
    if out_dir is not None:
        (out_dir / "summary.csv").write_text(summary_csv(rows))
        for metric in ("pde_solves", "jvp"):
            (out_dir / f"table_{metric}.csv").write_text(render_table(rows, metric))
    return rows


def summary_csv(rows: list[ExperimentRow]) -> str:
    lines = [CSV_PREAMBLE + ",".join(SUMMARY_COLUMNS)]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.problem,
                    f"{r.theta:g}",
                    f"{r.eps_r:g}",
                    f"{r.eps_g:g}",
                    r.status,
                    str(r.iterations),
                    str(r.successes),
                    str(r.pde_solves),
                    str(r.adjoint_solves),
                    str(r.jvp),
                    str(r.cg_iters),
                    f"{r.final_residual_norm:.9e}",
                    f"{r.final_scaled_gradient:.9e}",
                    f"{r.wall_ms:.3f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_table(rows: list[ExperimentRow], metric: str) -> str:
    """Pivot rows into the benchmark-table layout as CSV text.

    One line per tolerance pair in first-seen order, one column per theta in
    ascending order. Cells whose run did not satisfy a stopping condition
    render as a dash.
    """
    if metric not in ("pde_solves", "jvp"):
        raise ValueError(f"metric must be 'pde_solves' or 'jvp', got {metric!r}")
    thetas = sorted({r.theta for r in rows})
    pairs: list[tuple[float, float]] = []
    for r in rows:
        if (r.eps_r, r.eps_g) not in pairs:
            pairs.append((r.eps_r, r.eps_g))
    cell = {(r.eps_r, r.eps_g, r.theta): r for r in rows}
    lines = [CSV_PREAMBLE + "eps_r,eps_g," + ",".join(f"theta={t:g}" for t in thetas)]
    for eps_r, eps_g in pairs:
        vals = []
        converged_statuses = (
            SolveStatus.CONVERGED_RESIDUAL.value,
            SolveStatus.CONVERGED_SCALED_GRADIENT.value,
        )
        for t in thetas:
            r = cell.get((eps_r, eps_g, t))
            if r is not None and r.status in converged_statuses:
                vals.append(str(getattr(r, metric)))
            else:
                vals.append("-")
        lines.append(f"{eps_r:g},{eps_g:g}," + ",".join(vals))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# command line


def _add_problem_args(parser):
    parser.add_argument("problem", choices=["elliptic", "burgers"])
    parser.add_argument("--n-mesh", type=int, default=20, help="elliptic mesh subdivisions")
    parser.add_argument("--lambda", dest="lam", type=float, default=1e-3,
                        help="elliptic control regularization")
    parser.add_argument("--z", choices=["zero", "one"], default="zero",
                        help="elliptic desired state")
    parser.add_argument("--nx", type=int, default=16, help="burgers spatial resolution")
    parser.add_argument("--nt", type=int, default=16, help="burgers time steps")
    parser.add_argument("--nu", type=float, default=0.1, help="burgers viscosity")
    parser.add_argument("--omega", type=float, default=0.05,
                        help="burgers control regularization")


def _add_solver_args(parser):
    parser.add_argument("--eta", type=float, default=0.1)
    parser.add_argument("--gamma-min", type=float, default=1e-10)
    parser.add_argument("--max-iter", type=int, default=300)
    parser.add_argument("--hessian", choices=["zero", "gauss-newton"],
                        default="gauss-newton")
    parser.add_argument("--seed", type=int, default=0)


def _problem_params(args) -> dict:
    if args.problem == "elliptic":
        return {"n_mesh": args.n_mesh, "lam": args.lam, "z": args.z}
    return {"nx": args.nx, "nt": args.nt, "nu": args.nu, "omega": args.omega}


def _default_eps_grid(problem: str, z: str) -> tuple:
    if problem == "elliptic" and z == "zero":
        return ((1e-3, 1e-4), (1e-6, 1e-4), (1e-9, 1e-4))
    if problem == "elliptic":
        return ((1e-2, 1e-4), (1e-2, 1e-6), (1e-2, 1e-8))
    return ((1e-2, 1e-3), (1e-2, 1e-4), (1e-2, 1e-6))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="iclsq",
        description="Regularized Gauss-Newton experiments for implicitly "
        "constrained least squares",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run a single configuration")
    _add_problem_args(p_solve)
    _add_solver_args(p_solve)
    p_solve.add_argument("--theta", type=float, default=0.0)
    p_solve.add_argument("--eps-r", type=float, default=1e-6)
    p_solve.add_argument("--eps-g", type=float, default=1e-4)
    p_solve.add_argument("--jsonl", type=Path, default=None,
                         help="write the iteration trace to this file")

    p_sweep = sub.add_parser("sweep", help="run a tolerance x theta grid")
    _add_problem_args(p_sweep)
    _add_solver_args(p_sweep)
    p_sweep.add_argument("--grid-file", type=Path, default=None,
                         help="JSON file with 'theta' and 'eps' (pairs) lists")
    p_sweep.add_argument("--out-dir", type=Path, required=True)

    args = parser.parse_args(argv)

    if args.command == "solve":
        problem = build_problem(args.problem, _problem_params(args))
        config = SolverConfig(
            eps_R=args.eps_r,
            eps_g=args.eps_g,
            eta=args.eta,
            gamma_min=args.gamma_min,
            theta=args.theta,
            max_iter=args.max_iter,
            hessian_mode=args.hessian.replace("-", "_"),
            seed=args.seed,
        )
        sink = None
        trace_file = None
        if args.jsonl is not None:
            trace_file = open(args.jsonl, "w")
            sink = lambda rec: trace_file.write(
                json.dumps(rec.to_dict(), sort_keys=True) + "\n"
            )
        try:
            outcome = solve(
                problem,
                default_control(problem, args.problem),
                config,
                trace_sink=sink,
            )
        except Exception as exc:
            if trace_file is not None:
                trace_file.close()
            print(f"solver error: {exc}")
            return 2
        if trace_file is not None:
            trace_file.close()
        c = outcome.counters
        print(
            f"{args.problem}: {outcome.status.value} after {outcome.iterations} "
            f"iterations ({outcome.successes} successful), "
            f"pde_solves={c.forward_solves}, adjoint_solves={c.adjoint_solves}, "
            f"jvp={c.jacobian_applies}, cg_iters={c.cg_iterations}, "
            f"final |R|={outcome.residual_norm:.3e}, "
            f"scaled gradient={outcome.scaled_gradient:.3e}"
        )
        return 0

    # sweep
    if args.grid_file is not None:
        grid = json.loads(args.grid_file.read_text())
        theta_grid = tuple(grid["theta"])
        eps_grid = tuple((float(a), float(b)) for a, b in grid["eps"])
    else:
        theta_grid = DEFAULT_THETA_GRID
        eps_grid = _default_eps_grid(args.problem, getattr(args, "z", "zero"))
    spec = ExperimentSpec(
        problem=args.problem,
        problem_params=_problem_params(args),
        theta_grid=theta_grid,
        eps_grid=eps_grid,
        max_iter=args.max_iter,
        hessian_mode=args.hessian.replace("-", "_"),
        eta=args.eta,
        gamma_min=args.gamma_min,
        seed=args.seed,
        out_dir=args.out_dir,
    )
    rows = run_experiment(spec)
    print(render_table(rows, "pde_solves"))
    if any(r.status == "error" for r in rows):
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
