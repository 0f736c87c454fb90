"""Conic program IR and the interior-point backend behind it."""

import math

import numpy as np
import pytest

from robustlogit.program import ConicProgram, add_affine, const_expr, negate, var_expr
from robustlogit.solver import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    SolverConfig,
    SolverFailure,
    require_optimal,
    solve,
)


def test_var_bookkeeping():
    prog = ConicProgram()
    a = prog.add_var("a", obj=2.0)
    rest = prog.add_vars("w", 3)
    assert a == 0 and rest == [1, 2, 3]
    assert prog.num_vars == 4
    assert prog.name_of(0) == "a"
    assert prog.name_of(2) == "w[1]"
    prog.add_objective(a, 0.5)
    assert prog.objective[a] == 2.5


def test_affine_helpers():
    e = add_affine(var_expr(0, 2.0, 1.0), var_expr(0, 3.0), var_expr(1, -1.0, 0.5))
    cols, vals, const = e
    assert dict(zip(cols, vals)) == {0: 5.0, 1: -1.0}
    assert const == 1.5
    cols, vals, const = negate(e)
    assert dict(zip(cols, vals)) == {0: -5.0, 1: 1.0}
    assert const == -1.5


def test_softplus_epigraph_boundary():
    # min a subject to log(1 + exp(0)) <= a has optimum softplus(0) = log 2
    prog = ConicProgram()
    a = prog.add_var("a", obj=1.0)
    prog.softplus_epigraph(const_expr(0.0), var_expr(a))
    res = solve(prog)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(0.6931471805599453, abs=1e-6)


def test_softplus_epigraph_general_scores():
    # optimum of min a s.t. log(1+exp(c)) <= a is softplus(c)
    for c in (-3.0, -1.0, 0.5, 2.0, 10.0):
        prog = ConicProgram()
        a = prog.add_var("a", obj=1.0)
        prog.softplus_epigraph(const_expr(c), var_expr(a))
        res = solve(prog)
        assert res.objective == pytest.approx(math.log1p(math.exp(c)), abs=1e-6)


def test_softplus_feasibility_point():
    # (a=1, c=0): exp(-1) + exp(-1) = 0.7358 < 1, strictly feasible
    assert math.exp(-1.0) + math.exp(-1.0) == pytest.approx(0.7357588823428847)
    prog = ConicProgram()
    a = prog.add_var("a", obj=1.0)
    prog.softplus_epigraph(const_expr(0.0), var_expr(a))
    prog.add_ineq(var_expr(a, 1.0, -1.0))  # a >= 1
    res = solve(prog)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(1.0, abs=1e-7)


def test_exp_cone_boundary():
    # min u with (u, 1, -1) in Kexp forces u = exp(-1)
    prog = ConicProgram()
    u = prog.add_var("u", obj=1.0)
    prog.add_expcone(var_expr(u), const_expr(1.0), const_expr(-1.0))
    res = solve(prog)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(0.36787944117144233, abs=1e-7)


def test_infeasible_status():
    # (u,1,0) in Kexp needs u >= 1, contradicted by u <= 0
    prog = ConicProgram()
    u = prog.add_var("u")
    prog.add_expcone(var_expr(u), const_expr(1.0), const_expr(0.0))
    prog.add_ineq(var_expr(u, -1.0))
    res = solve(prog)
    assert res.status == INFEASIBLE
    with pytest.raises(SolverFailure):
        require_optimal(res, "toy")


def test_unbounded_status():
    prog = ConicProgram()
    t = prog.add_var("t", obj=-1.0)
    prog.add_ineq(var_expr(t))  # t >= 0, minimize -t
    res = solve(prog)
    assert res.status == UNBOUNDED


def test_second_order_cone():
    # min t with ||(3,4)|| <= t
    prog = ConicProgram()
    t = prog.add_var("t", obj=1.0)
    prog.add_soc([var_expr(t), const_expr(3.0), const_expr(4.0)])
    res = solve(prog)
    assert res.objective == pytest.approx(5.0, abs=1e-7)


def test_equality_rows():
    # min x + y with x + y = 2 and x - y = 0
    prog = ConicProgram()
    x = prog.add_var("x", obj=1.0)
    y = prog.add_var("y", obj=1.0)
    prog.add_eq(([x, y], [1.0, 1.0], -2.0))
    prog.add_eq(([x, y], [1.0, -1.0], 0.0))
    res = solve(prog)
    assert res.value(x) == pytest.approx(1.0, abs=1e-7)
    assert res.value(y) == pytest.approx(1.0, abs=1e-7)


def test_resolve_determinism():
    def build():
        prog = ConicProgram()
        a = prog.add_var("a", obj=1.0)
        b = prog.add_var("b", obj=0.25)
        prog.softplus_epigraph(var_expr(b, -1.0, 0.5), var_expr(a))
        prog.add_ineq(var_expr(b, 1.0, 2.0))
        return prog

    first = solve(build())
    second = solve(build())
    assert first.status == second.status
    assert first.objective == second.objective  # bitwise equal
    np.testing.assert_array_equal(first.x, second.x)


def test_objective_scaling():
    def build(scale):
        prog = ConicProgram()
        a = prog.add_var("a", obj=scale)
        prog.softplus_epigraph(const_expr(1.0), var_expr(a))
        return prog

    base = solve(build(1.0))
    scaled = solve(build(3.0))
    assert scaled.objective == pytest.approx(3.0 * base.objective, rel=1e-7)
    assert scaled.x[0] == pytest.approx(base.x[0], abs=1e-6)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol_gap_abs=0.0)
    with pytest.raises(ValueError):
        SolverConfig(tol_feas=-1e-9)


def test_iteration_limit_status():
    prog = ConicProgram()
    a = prog.add_var("a", obj=1.0)
    prog.softplus_epigraph(const_expr(0.0), var_expr(a))
    res = solve(prog, SolverConfig(max_iter=1))
    assert res.status == "iteration_limit"


def test_to_text_dump():
    prog = ConicProgram()
    a = prog.add_var("a", obj=1.0)
    prog.softplus_epigraph(const_expr(0.0), var_expr(a), name="sp")
    text = prog.to_text()
    assert "minimize" in text
    assert "u_sp" in text and "v_sp" in text
    assert "Kexp" in text


def test_empty_program_rejected():
    prog = ConicProgram()
    prog.add_var("a", obj=1.0)
    with pytest.raises(ValueError):
        solve(prog)
