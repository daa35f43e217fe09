"""Maximum feasible row subset by branch-and-bound over big-M row indicators."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .lp import LpProblem, Row, RowRel, Solution, SolverError, Status
from .simplex import conflict_rows, solve, solve_feasibility

CERTIFY_ROWS = 20
NODE_LIMIT = 4000


def big_m(p: LpProblem, row: Row) -> float:
    """Per-row M: sum |coef| * bound + |rhs| + 1."""
    total = 0.0
    for k, c in row.coeffs:
        bound = max(abs(p.lower[k]), abs(p.upper[k]))
        if not math.isfinite(bound):
            raise SolverError(f"variable {p.variables[k]} needs a finite upper bound for big-M")
        total += abs(c) * bound
    return total + abs(row.rhs) + 1.0


def _relaxation(p: LpProblem, fixed: dict[int, int], ms: list[float]) -> LpProblem:
    """x plus y_i in [0,1]; row i relaxed to f_i(x) <= M_i (1 - y_i); maximize sum y."""
    n, m = p.n, len(p.rows)
    names = list(p.variables) + [f"__y{i}" for i in range(m)]
    lower = np.concatenate([p.lower, np.zeros(m)])
    upper = np.concatenate([p.upper, np.ones(m)])
    for i, v in fixed.items():
        lower[n + i] = upper[n + i] = float(v)
    obj = np.concatenate([np.zeros(n), np.ones(m)])
    rows = []
    for i, row in enumerate(p.rows):
        y = n + i
        coeffs = dict(row.coeffs)
        if row.rel in (RowRel.LE, RowRel.EQ):
            rows.append(Row.make({**coeffs, y: ms[i]}, RowRel.LE, row.rhs + ms[i], f"{row.name}+"))
        if row.rel in (RowRel.GE, RowRel.EQ):
            neg = {k: -c for k, c in coeffs.items()}
            rows.append(Row.make({**neg, y: ms[i]}, RowRel.LE, -row.rhs + ms[i], f"{row.name}-"))
    return LpProblem(names, lower, upper, obj, rows, maximize=True)


def _satisfied(p: LpProblem, x) -> list[int]:
    return [i for i, row in enumerate(p.rows) if row.satisfied(x)]


def max_feasible_subset(p: LpProblem, node_limit: Optional[int] = None) -> Solution:
    """Assignment satisfying as many rows of ``p`` as possible.

    Optimality is certified up to CERTIFY_ROWS rows; larger problems stop
    after ``node_limit`` nodes and report the remaining bound gap.
    """
    m = len(p.rows)
    whole = solve_feasibility(p)
    if whole.ok:
        return Solution(Status.MAX_SUBSET, whole.x, p.variables, active_rows=list(range(m)))
    ms = [big_m(p, r) for r in p.rows]
    if node_limit is None:
        node_limit = NODE_LIMIT if m > CERTIFY_ROWS else 1 << 22

    best_x: Optional[np.ndarray] = None
    best_active: list[int] = []
    # any point inside the box gives an incumbent
    start = np.where(np.isfinite(p.upper), np.minimum(p.lower, p.upper), p.lower)
    best_x, best_active = start, _satisfied(p, start)

    nodes = 0
    open_bound = 0.0
    stack: list[dict[int, int]] = [{}]
    while stack:
        fixed = stack.pop()
        if nodes >= node_limit:
            open_bound = max(open_bound, m - sum(1 for v in fixed.values() if v == 0))
            for f in stack:
                open_bound = max(open_bound, m - sum(1 for v in f.values() if v == 0))
            break
        nodes += 1
        if m - sum(1 for v in fixed.values() if v == 0) <= len(best_active):
            continue
        rel = solve(_relaxation(p, fixed, ms))
        if not rel.ok:
            continue
        bound = math.floor(rel.objective + 1e-6)
        if bound <= len(best_active):
            continue
        x = rel.x[:p.n]
        sat = _satisfied(p, x)
        if len(sat) > len(best_active):
            best_x, best_active = x, sat
        # enforce every row not switched off; if that works this node is solved
        keep = [i for i in range(m) if fixed.get(i, 1) == 1]
        sub = solve_feasibility(p.subproblem(keep))
        if sub.ok:
            sat = _satisfied(p, sub.x)
            if len(sat) > len(best_active):
                best_x, best_active = sub.x, sat
            continue
        free = [i for i in range(m) if i not in fixed]
        if not free:
            continue
        # branch on an undecided row from a conflict among the enforced rows when one is known
        core = conflict_rows(p.subproblem(keep)) or []
        cand = [keep[c] for c in core if keep[c] in free] or free
        y = rel.x[p.n:]
        pick = min(cand, key=lambda i: (abs(y[i] - 0.5), i))
        stack.append({**fixed, pick: 0})
        stack.append({**fixed, pick: 1})

    gap = max(0.0, open_bound - len(best_active))
    # polish: a vertex satisfying the chosen rows
    sub = solve_feasibility(p.subproblem(best_active))
    if sub.ok and len(_satisfied(p, sub.x)) >= len(best_active):
        best_x = sub.x
        best_active = _satisfied(p, sub.x)
    return Solution(Status.MAX_SUBSET, np.asarray(best_x, dtype=float), p.variables, active_rows=best_active,
                    optimal=gap == 0, bound_gap=gap, nodes=nodes)
