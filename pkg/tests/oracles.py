"""Independent reference implementations used as test oracles."""
import itertools

import numpy as np
from scipy.optimize import linprog

from tsmstress.solver import LpProblem, RowRel


def scipy_status(p: LpProblem, use_objective: bool = False) -> tuple[str, object]:
    """('feasible'|'infeasible'|'unbounded', result) from HiGHS."""
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row in p.rows:
        a = np.zeros(p.n)
        for k, c in row.coeffs:
            a[k] = c
        if row.rel == RowRel.LE:
            A_ub.append(a), b_ub.append(row.rhs)
        elif row.rel == RowRel.GE:
            A_ub.append(-a), b_ub.append(-row.rhs)
        else:
            A_eq.append(a), b_eq.append(row.rhs)
    c = (-p.objective if p.maximize else p.objective) if use_objective else np.zeros(p.n)
    bounds = [(lo, None if not np.isfinite(hi) else hi) for lo, hi in zip(p.lower, p.upper)]
    res = linprog(c, A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None, b_eq=b_eq or None,
                  bounds=bounds, method="highs")
    return {0: "feasible", 2: "infeasible", 3: "unbounded"}.get(res.status, "error"), res


def brute_max_subset(p: LpProblem) -> int:
    """Largest number of rows that are simultaneously satisfiable, by enumeration."""
    m = len(p.rows)
    for size in range(m, -1, -1):
        for rows in itertools.combinations(range(m), size):
            if scipy_status(p.subproblem(list(rows)))[0] == "feasible":
                return size
    return 0
