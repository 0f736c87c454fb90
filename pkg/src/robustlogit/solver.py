"""Clarabel backend for the conic program IR.

Translates a :class:`~robustlogit.program.ConicProgram` into Clarabel's
``Ax + s = b, s in K`` form and maps the solver status back to a small set
of stable strings.  Clarabel orders an exponential-cone slack as
(z_3, z_2, z_1) relative to the (a, b, c) convention used by the IR, so the
rows of each triple are emitted in reversed order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

import clarabel

from .program import ConicProgram, buffer_arrays

# Stable status vocabulary used throughout the package.
OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
TIME_LIMIT = "time_limit"
NUMERICAL_ERROR = "numerical_error"
UNKNOWN = "unknown"

_OK_STATUSES = (OPTIMAL, NEAR_OPTIMAL)


class SolverFailure(RuntimeError):
    """A solve did not reach (near-)optimality where the caller required it."""


@dataclass(frozen=True)
class SolverConfig:
    tol_gap_abs: float = 1e-8
    tol_gap_rel: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 400
    time_limit: float = 0.0  # seconds; 0 disables the cap
    verbose: bool = False
    threads: int = 1  # single-threaded keeps runs reproducible
    # ruiz equilibration regularly stalls the IPM on these exp-cone programs,
    # so it is off by default; solve() walks a small fallback ladder over this
    # knob and the step fraction when an attempt ends in a numerical failure
    equilibrate: bool = False
    # hint to solve the dual conic form where the backend offers one;
    # Clarabel's homogeneous embedding has no separate dual path, so the
    # flag is accepted but currently changes nothing
    prefer_dual: bool = False
    # a stalled run whose duality gap is already below this is reported as
    # near_optimal instead of failing; large ill-conditioned programs can
    # only be certified to a looser gap than the target tolerance
    stall_gap_tol: float = 5e-5

    def __post_init__(self):
        if min(self.tol_gap_abs, self.tol_gap_rel, self.tol_feas, self.stall_gap_tol) <= 0:
            raise ValueError("solver tolerances must be positive")


@dataclass
class SolveResult:
    status: str
    raw_status: str
    objective: float
    # dual objective at the returned dual point; certifies a lower bound on
    # the optimum even when the primal value overshoots by the tolerance
    objective_dual: float
    x: np.ndarray
    solve_time: float
    iterations: int

    @property
    def ok(self) -> bool:
        return self.status in _OK_STATUSES

    def value(self, j: int) -> float:
        return float(self.x[j])


def _map_status(raw) -> str:
    name = str(raw).split(".")[-1]
    table = {
        "Solved": OPTIMAL,
        "AlmostSolved": NEAR_OPTIMAL,
        "PrimalInfeasible": INFEASIBLE,
        "AlmostPrimalInfeasible": INFEASIBLE,
        "DualInfeasible": UNBOUNDED,
        "AlmostDualInfeasible": UNBOUNDED,
        "MaxIterations": ITERATION_LIMIT,
        "MaxTime": TIME_LIMIT,
        "NumericalError": NUMERICAL_ERROR,
        "InsufficientProgress": NUMERICAL_ERROR,
    }
    return table.get(name, UNKNOWN)


def _assemble(program: ConicProgram):
    """Stack rows as b - Ax = s with cone blocks in Clarabel's block order."""
    n = program.num_vars
    rows_parts, cols_parts, vals_parts, b_parts = [], [], [], []
    cones = []
    offset = 0

    for buf, cone in ((program.eq, clarabel.ZeroConeT), (program.ineq, clarabel.NonnegativeConeT)):
        if buf.count:
            r, c, v, consts = buffer_arrays(buf)
            rows_parts.append(r + offset)
            cols_parts.append(c)
            vals_parts.append(-v)
            b_parts.append(consts)
            cones.append(cone(buf.count))
            offset += buf.count

    for block in program.soc_blocks:
        for cols_e, vals_e, const in block:
            rows_parts.append(np.full(len(cols_e), offset, dtype=np.int64))
            cols_parts.append(np.asarray(cols_e, dtype=np.int64))
            vals_parts.append(-np.asarray(vals_e, dtype=np.float64))
            b_parts.append(np.array([const]))
            offset += 1
        cones.append(clarabel.SecondOrderConeT(len(block)))

    ncones = program.num_exp_cones
    if ncones:
        r, c, v, consts = buffer_arrays(program.exp)
        # IR stores each triple as rows (a, b, c); Clarabel expects (c, b, a).
        rows_parts.append((r // 3) * 3 + (2 - r % 3) + offset)
        cols_parts.append(c)
        vals_parts.append(-v)
        b_parts.append(consts.reshape(-1, 3)[:, ::-1].ravel())
        cones.extend(clarabel.ExponentialConeT() for _ in range(ncones))
        offset += 3 * ncones

    if offset == 0:
        raise ValueError("program has no constraints")
    rows = np.concatenate(rows_parts) if rows_parts else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols_parts) if cols_parts else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals_parts) if vals_parts else np.zeros(0)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(offset, n))
    b = np.concatenate(b_parts)
    return A, b, cones


def _solve_once(P, q, A, b, cones, config: SolverConfig, equilibrate: bool,
                step_fraction: float, budget: float) -> SolveResult:
    settings = clarabel.DefaultSettings()
    settings.verbose = config.verbose
    settings.max_iter = config.max_iter
    settings.tol_gap_abs = config.tol_gap_abs
    settings.tol_gap_rel = config.tol_gap_rel
    settings.tol_feas = config.tol_feas
    settings.max_threads = config.threads
    settings.equilibrate_enable = equilibrate
    settings.max_step_fraction = step_fraction
    settings.reduced_tol_gap_abs = config.stall_gap_tol
    settings.reduced_tol_gap_rel = config.stall_gap_tol
    if budget > 0:
        settings.time_limit = budget

    t0 = time.perf_counter()
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    solution = solver.solve()
    elapsed = time.perf_counter() - t0

    n = q.shape[0]
    x = np.asarray(solution.x, dtype=float)
    if x.size != n:
        x = np.full(n, np.nan)
    dual = float(solution.obj_val_dual)
    if not np.isfinite(dual):
        dual = float(solution.obj_val)
    return SolveResult(
        status=_map_status(solution.status),
        raw_status=str(solution.status).split(".")[-1],
        objective=float(solution.obj_val),
        objective_dual=dual,
        x=x,
        solve_time=elapsed,
        iterations=int(solution.iterations),
    )


def solve(program: ConicProgram, config: SolverConfig | None = None) -> SolveResult:
    config = config or SolverConfig()
    n = program.num_vars
    q = np.zeros(n)
    for j, v in program.objective.items():
        q[j] = v
    A, b, cones = _assemble(program)
    P = sp.csc_matrix((n, n))

    # stalls are sensitive to equilibration and to the step fraction, and the
    # failure sets barely overlap, so walk a short ladder before giving up
    attempts = [
        (config.equilibrate, 0.99),
        (not config.equilibrate, 0.99),
        (config.equilibrate, 0.90),
        (not config.equilibrate, 0.90),
    ]
    spent = 0.0
    result = None
    for equilibrate, step in attempts:
        budget = 0.0
        if config.time_limit and config.time_limit > 0:
            budget = max(config.time_limit - spent, 1e-3)
        attempt = _solve_once(P, q, A, b, cones, config, equilibrate, step, budget)
        spent += attempt.solve_time
        if result is None:
            result = attempt
        if attempt.status != NUMERICAL_ERROR:
            result = attempt
            break
    result.solve_time = spent
    return result


def require_optimal(result: SolveResult, context: str) -> SolveResult:
    if not result.ok:
        raise SolverFailure(f"{context}: solver returned {result.status} ({result.raw_status})")
    return result
