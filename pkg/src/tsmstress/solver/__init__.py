"""In-repo LP feasibility, optimization and max-feasible-subset solving."""
from .build import lp_from_inequalities
from .lp import FEAS_RTOL, LpProblem, Row, RowRel, Solution, SolverError, Status
from .ranges import TimerBound, pairwise_bounds, solve_symbolic_range
from .simplex import conflict_rows, solve, solve_feasibility
from .subset import big_m, max_feasible_subset

__all__ = [
    "FEAS_RTOL", "LpProblem", "Row", "RowRel", "Solution", "SolverError", "Status",
    "TimerBound", "pairwise_bounds", "solve_symbolic_range",
    "lp_from_inequalities", "conflict_rows", "solve", "solve_feasibility", "big_m", "max_feasible_subset",
]
