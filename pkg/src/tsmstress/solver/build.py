"""Turn symbolic inequalities into an LpProblem."""
from __future__ import annotations

import math
from typing import Iterable, Mapping, Optional

import numpy as np

from ..symbolic import LinearInequality, Rel, Var, parse_var, var_name
from .lp import LpProblem, Row, RowRel


def _key(name: str):
    v = parse_var(name)
    return (v[0], v[1:])


def lp_from_inequalities(ineqs: Iterable[LinearInequality], epsilon: float = 1.0,
                         bounds: Optional[Mapping] = None, lower: float = None, upper: float = math.inf,
                         objective: Optional[Mapping] = None, maximize: bool = False,
                         extra: Iterable[Var] = ()) -> LpProblem:
    """Rows ``lhs - rhs <= -epsilon`` (strict) or ``<= 0``.

    Every variable is positive; by default that is enforced as ``>= epsilon``.
    ``bounds`` maps a Var or name to ``(lo, hi)`` and overrides the default.
    """
    ineqs = list(ineqs)
    if lower is None:
        lower = epsilon
    names = {var_name(v) for q in ineqs for v in q.variables} | {var_name(v) for v in extra}
    for key in (bounds or {}):
        names.add(key if isinstance(key, str) else var_name(key))
    for key in (objective or {}):
        names.add(key if isinstance(key, str) else var_name(key))
    variables = sorted(names, key=_key)
    idx = {v: k for k, v in enumerate(variables)}
    lo = np.full(len(variables), float(lower))
    hi = np.full(len(variables), float(upper))
    for key, b in (bounds or {}).items():
        k = idx[key if isinstance(key, str) else var_name(key)]
        lo[k], hi[k] = (b.lo, b.hi) if hasattr(b, "lo") else (b, b) if np.isscalar(b) else b
    obj = np.zeros(len(variables))
    for key, c in (objective or {}).items():
        obj[idx[key if isinstance(key, str) else var_name(key)]] = c
    rows = []
    for q in ineqs:
        diff = q.diff
        coeffs = {idx[var_name(v)]: float(c) for v, c in diff.terms}
        rhs = -float(diff.constant) - (epsilon if q.rel == Rel.LT else 0.0)
        rows.append(Row.make(coeffs, RowRel.LE, rhs, q.tag or ""))
    return LpProblem(variables, lo, hi, obj, rows, maximize)
