"""Dense two-phase simplex with Bland's rule, preceded by a light presolve."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .lp import LpProblem, Row, RowRel, Solution, SolverError, Status

PIVOT_TOL = 1e-9
MAX_PIVOTS = 50_000
IIS_MAX_ROWS = 40


class _Infeasible(Exception):
    pass


def _presolve(p: LpProblem, use_objective: bool):
    """Tighten bounds from singleton rows and drop rows/columns that no longer matter.

    Returns (lower, upper, remaining rows, cost vector) or raises _Infeasible.
    """
    lo = p.lower.copy()
    hi = p.upper.copy()
    cost = (-p.objective if p.maximize else p.objective.copy()) if use_objective else np.zeros(p.n)
    rows = list(p.rows)
    changed = True
    while changed:
        changed = False
        keep = []
        for row in rows:
            live = [(k, c) for k, c in row.coeffs if lo[k] != hi[k]]
            fixed = sum(c * lo[k] for k, c in row.coeffs if lo[k] == hi[k])
            rhs = row.rhs - fixed
            if not live:
                if Row((), row.rel, rhs).violation([]) > 1e-7 * max(1.0, abs(row.rhs)):
                    raise _Infeasible
                changed = changed or bool(row.coeffs)
                continue
            if len(live) == 1:
                k, c = live[0]
                bound = rhs / c
                upper_side = (row.rel == RowRel.LE) == (c > 0)
                if row.rel in (RowRel.EQ,) or upper_side:
                    hi[k] = min(hi[k], bound)
                if row.rel in (RowRel.EQ,) or not upper_side:
                    lo[k] = max(lo[k], bound)
                if lo[k] > hi[k] + 1e-9 * max(1.0, abs(lo[k])):
                    raise _Infeasible
                if lo[k] > hi[k]:
                    lo[k] = hi[k]
                changed = True
                continue
            keep.append(row)
        rows = keep
    return lo, hi, rows, cost


def _simplex(A: np.ndarray, b: np.ndarray, rels: list, cost: np.ndarray):
    """Solve ``min cost.y`` s.t. ``A y rel b``, ``y >= 0`` with ``b >= 0``.

    Returns (status, y) with status in {"optimal", "infeasible", "unbounded"}.
    """
    m, n = A.shape
    n_slack = sum(1 for r in rels if r != RowRel.EQ)
    n_art = sum(1 for r in rels if r != RowRel.LE)
    width = n + n_slack + n_art
    T = np.zeros((m, width + 1))
    T[:, :n] = A
    T[:, -1] = b
    basis = np.empty(m, dtype=int)
    s = n
    a = n + n_slack
    art_cols = []
    for i, r in enumerate(rels):
        if r == RowRel.LE:
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        else:
            if r == RowRel.GE:
                T[i, s] = -1.0
                s += 1
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1

    def run(obj: np.ndarray, allowed: np.ndarray) -> str:
        pivots = 0
        while True:
            cb = obj[basis]
            reduced = obj[:width] - cb @ T[:, :width]
            cand = np.where((reduced < -PIVOT_TOL) & allowed)[0]
            if cand.size == 0:
                return "optimal"
            col = int(cand[0])  # Bland: lowest index entering
            colv = T[:, col]
            pos = colv > PIVOT_TOL
            if not pos.any():
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = T[pos, -1] / colv[pos]
            best = ratios.min()
            ties = np.where(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))[0]
            row = int(ties[np.argmin(basis[ties])])  # Bland: lowest basic index leaves
            T[row] /= T[row, col]
            others = np.arange(m) != row
            T[others] -= np.outer(T[others, col], T[row])
            basis[row] = col
            pivots += 1
            if pivots > MAX_PIVOTS:
                raise SolverError("pivot limit exceeded")

    allowed = np.ones(width, dtype=bool)
    if art_cols:
        obj1 = np.zeros(width)
        obj1[art_cols] = 1.0
        run(obj1, allowed)
        if T[:, -1] @ obj1[basis] > 1e-7 * max(1.0, np.abs(b).max(initial=0.0)):
            return "infeasible", None
        # drive zero-level artificials out of the basis where possible
        for i in range(m):
            if basis[i] in art_cols:
                nz = np.where(np.abs(T[i, :n + n_slack]) > PIVOT_TOL)[0]
                if nz.size:
                    col = int(nz[0])
                    T[i] /= T[i, col]
                    others = np.arange(m) != i
                    T[others] -= np.outer(T[others, col], T[i])
                    basis[i] = col
        allowed[n + n_slack:] = False
    obj2 = np.zeros(width)
    obj2[:n] = cost
    status = run(obj2, allowed)
    y = np.zeros(width)
    y[basis] = T[:, -1]
    return status, np.maximum(y[:n], 0.0)


def _solve(p: LpProblem, use_objective: bool) -> Solution:
    try:
        lo, hi, rows, cost = _presolve(p, use_objective)
    except _Infeasible:
        return Solution(Status.INFEASIBLE, variables=p.variables)
    x = lo.copy()
    free_unbounded = False
    used = sorted({k for row in rows for k, _ in row.coeffs if lo[k] != hi[k]})
    # free columns: no remaining row touches them
    for k in range(p.n):
        if k in used or lo[k] == hi[k]:
            continue
        if cost[k] < 0:
            if hi[k] == math.inf:
                free_unbounded = True
            else:
                x[k] = hi[k]
    if rows and not (all(Row(r.coeffs, r.rel, r.rhs).satisfied(x) for r in rows)
                     and np.all(cost[used] >= 0)):
        col = {k: c for c, k in enumerate(used)}
        ub_rows = [k for k in used if hi[k] < math.inf]
        m = len(rows) + len(ub_rows)
        A = np.zeros((m, len(used)))
        b = np.zeros(m)
        rels: list = []
        for i, row in enumerate(rows):
            rhs = row.rhs
            for k, c in row.coeffs:
                if k in col:
                    A[i, col[k]] = c
                rhs -= c * lo[k]
            b[i] = rhs
            rels.append(row.rel)
        for t, k in enumerate(ub_rows):
            A[len(rows) + t, col[k]] = 1.0
            b[len(rows) + t] = hi[k] - lo[k]
            rels.append(RowRel.LE)
        for i in range(m):
            if b[i] < 0:
                A[i] = -A[i]
                b[i] = -b[i]
                rels[i] = {RowRel.LE: RowRel.GE, RowRel.GE: RowRel.LE}.get(rels[i], rels[i])
        status, y = _simplex(A, b, rels, cost[used])
        if status == "infeasible":
            return Solution(Status.INFEASIBLE, variables=p.variables)
        if status == "unbounded":
            return Solution(Status.UNBOUNDED, variables=p.variables)
        x[used] = lo[used] + y
    if free_unbounded:
        return Solution(Status.UNBOUNDED, variables=p.variables)
    obj = float(p.objective @ x)
    return Solution(Status.OPTIMAL if use_objective else Status.FEASIBLE, x, p.variables, obj)


def conflict_rows(p: LpProblem) -> Optional[list[int]]:
    """Deletion filter: an irreducible infeasible row subset, or None if too large/feasible."""
    if len(p.rows) > IIS_MAX_ROWS:
        return None
    keep = list(range(len(p.rows)))
    if _solve(p.subproblem(keep), False).ok:
        return None
    for i in list(keep):
        trial = [k for k in keep if k != i]
        if not _solve(p.subproblem(trial), False).ok:
            keep = trial
    return keep


def solve_feasibility(p: LpProblem, conflict: bool = True) -> Solution:
    """A basic feasible point of ``p`` (objective ignored), or Infeasible with a conflict set when cheap."""
    sol = _solve(p, use_objective=False)
    if conflict and sol.status == Status.INFEASIBLE:
        sol.conflict = conflict_rows(p)
    return sol


def solve(p: LpProblem) -> Solution:
    """Optimize the objective of ``p``."""
    sol = _solve(p, use_objective=True)
    if sol.status == Status.INFEASIBLE:
        sol.conflict = conflict_rows(p)
    return sol
