import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_max_subset, scipy_status
from tsmstress.constraints import substitute_timers, worst_overhead_system
from tsmstress.solver import (LpProblem, Row, RowRel, SolverError, Status, lp_from_inequalities,
                              max_feasible_subset, pairwise_bounds, solve, solve_feasibility,
                              solve_symbolic_range)
from tsmstress.topology import Interval, wb_timers


def one_var(rows, lo=0.0, hi=math.inf):
    return LpProblem.build(["x"], [Row.make({0: 1.0}, rel, rhs, f"r{i}") for i, (rel, rhs) in enumerate(rows)],
                           lower=lo, upper=hi)


def test_contradictory_bounds_infeasible():
    sol = solve_feasibility(one_var([(RowRel.LE, 1), (RowRel.GE, 2)]))
    assert sol.status == Status.INFEASIBLE
    assert sorted(sol.conflict) == [0, 1]


def test_max_subset_drops_one_row():
    p = one_var([(RowRel.LE, 1), (RowRel.GE, 2), (RowRel.GE, 0)], 0, 10)
    sol = max_feasible_subset(p)
    assert sol.status == Status.MAX_SUBSET and len(sol.active_rows) == 2 and sol.optimal


def test_max_subset_of_feasible_system_is_everything():
    p = one_var([(RowRel.LE, 5), (RowRel.GE, 2)], 0, 10)
    whole = solve_feasibility(p)
    sub = max_feasible_subset(p)
    assert sub.active_rows == [0, 1]
    assert np.allclose(sub.x, whole.x)


def test_big_m_needs_finite_bounds():
    p = one_var([(RowRel.LE, 1), (RowRel.GE, 2)])
    with pytest.raises(SolverError):
        max_feasible_subset(p)


def test_wb_system_solution():
    sys = substitute_timers(worst_overhead_system(3), wb_timers(source=1))
    pins = {f"d({a},{b})": (100, 100) for a in range(1, 4) for b in (0,)}
    pins.update({f"d(0,{b})": (100, 100) for b in range(1, 4)})
    sol = solve_feasibility(sys.to_lp(bounds=pins))
    x = sol.assignment
    assert sol.ok
    assert x["d(1,2)"] > 300 and x["d(1,3)"] > 300 and x["d(2,3)"] > 200


def test_lp_text_round_trip():
    p = substitute_timers(worst_overhead_system(3), wb_timers()).to_lp()
    assert LpProblem.from_text(p.to_text()) == p


@pytest.mark.parametrize("iv,bound", [(Interval(2, 200), -196), (Interval(5, 50), -40), (Interval(30, 30), 30)])
def test_symbolic_range(iv, bound):
    rules = pairwise_bounds(solve_symbolic_range(worst_overhead_system(2).choose(), iv))
    assert rules == {(1, 2): bound, (2, 1): bound}


def test_symbolic_range_text():
    out = solve_symbolic_range(worst_overhead_system(2).choose(), Interval(2, 200))
    assert "Exp(1) - Exp(2) < -196" in [str(b) for b in out]


def random_lp(draw_rows, n):
    rows = [Row.make({k: c for k, c in enumerate(coefs)}, rel, rhs, f"r{i}")
            for i, (coefs, rel, rhs) in enumerate(draw_rows)]
    return LpProblem.build([f"x{k}" for k in range(n)], rows, lower=0.0, upper=10.0,
                           objective=[1.0] * n)


coef = st.integers(-3, 3).map(float)
row = st.tuples(st.lists(coef, min_size=3, max_size=3), st.sampled_from(list(RowRel)), st.integers(-8, 12).map(float))


@given(st.lists(row, min_size=1, max_size=6))
def test_feasibility_matches_highs(rows):
    p = random_lp(rows, 3)
    ours = solve_feasibility(p, conflict=False)
    theirs, _ = scipy_status(p)
    assert ours.ok == (theirs == "feasible")
    if ours.ok:
        assert p.check(ours.x) == []


@given(st.lists(row, min_size=1, max_size=6))
def test_optimum_matches_highs(rows):
    p = random_lp(rows, 3)
    ours = solve(p)
    status, res = scipy_status(p, use_objective=True)
    if status == "feasible":
        assert ours.ok and abs(ours.objective - res.fun) <= 1e-6 * max(1, abs(res.fun))


@given(st.lists(row, min_size=1, max_size=6))
def test_solver_is_deterministic(rows):
    p = random_lp(rows, 3)
    a, b = solve(p), solve(p)
    assert a.status == b.status
    if a.ok:
        assert np.array_equal(a.x, b.x)


@settings(max_examples=30)
@given(st.lists(row, min_size=2, max_size=7))
def test_max_subset_matches_enumeration(rows):
    p = random_lp(rows, 3)
    sol = max_feasible_subset(p)
    assert len(sol.active_rows) == brute_max_subset(p)
    assert p.subproblem(sol.active_rows).check(sol.x) == []


def test_lp_builder_margins_strict_rows():
    q = worst_overhead_system(2).choose()[0]
    p = lp_from_inequalities([q], epsilon=2.0)
    assert p.rows[0].rhs == -2.0
    assert np.all(p.lower == 2.0)
