"""LP problem/solution types and the plain-text LP format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

FEAS_RTOL = 1e-7


class SolverError(ValueError):
    pass


class RowRel(str, Enum):
    LE = "<="
    GE = ">="
    EQ = "="


@dataclass(frozen=True)
class Row:
    coeffs: tuple  # ((var index, coef), ...) sorted, nonzero
    rel: RowRel
    rhs: float
    name: str = ""

    @classmethod
    def make(cls, coeffs: Mapping[int, float], rel, rhs: float, name: str = "") -> "Row":
        items = tuple(sorted((int(k), float(v)) for k, v in coeffs.items() if v != 0))
        return cls(items, RowRel(rel), float(rhs), name)

    def activity(self, x) -> float:
        return sum(c * x[k] for k, c in self.coeffs)

    def violation(self, x) -> float:
        """Amount by which ``x`` violates the row (0 if satisfied)."""
        a = self.activity(x)
        if self.rel == RowRel.LE:
            return max(0.0, a - self.rhs)
        if self.rel == RowRel.GE:
            return max(0.0, self.rhs - a)
        return abs(a - self.rhs)

    def satisfied(self, x, rtol: float = FEAS_RTOL) -> bool:
        scale = max(1.0, abs(self.rhs), max((abs(c * x[k]) for k, c in self.coeffs), default=0.0))
        return self.violation(x) <= rtol * scale


@dataclass
class LpProblem:
    """``optimize c.x`` subject to rows and ``lower <= x <= upper`` (``lower >= 0``)."""

    variables: list[str]
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    rows: list[Row] = field(default_factory=list)
    maximize: bool = False

    def __post_init__(self):
        n = len(self.variables)
        self.lower = np.asarray(self.lower, dtype=float).reshape(n)
        self.upper = np.asarray(self.upper, dtype=float).reshape(n)
        self.objective = np.asarray(self.objective, dtype=float).reshape(n)
        if np.any(self.lower < 0):
            raise SolverError("all variables need a non-negative lower bound")
        if len(set(self.variables)) != n:
            raise SolverError("duplicate variable names")

    @classmethod
    def build(cls, variables: Sequence[str], rows=(), lower=0.0, upper=math.inf, objective=None,
              maximize=False) -> "LpProblem":
        n = len(variables)
        lo = np.full(n, float(lower)) if np.isscalar(lower) else lower
        up = np.full(n, float(upper)) if np.isscalar(upper) else upper
        obj = np.zeros(n) if objective is None else objective
        return cls(list(variables), lo, up, obj, list(rows), maximize)

    @property
    def n(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        return self.variables.index(name)

    def dense(self) -> tuple[np.ndarray, list[RowRel], np.ndarray]:
        A = np.zeros((len(self.rows), self.n))
        for r, row in enumerate(self.rows):
            for k, c in row.coeffs:
                A[r, k] = c
        return A, [row.rel for row in self.rows], np.array([row.rhs for row in self.rows])

    def check(self, x, rtol: float = FEAS_RTOL) -> list[int]:
        """Indices of rows violated by ``x`` (bounds reported as -1)."""
        x = np.asarray(x, dtype=float)
        bad = [i for i, row in enumerate(self.rows) if not row.satisfied(x, rtol)]
        tol = rtol * np.maximum(1.0, np.abs(x))
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            bad.append(-1)
        return bad

    def subproblem(self, rows: Sequence[int]) -> "LpProblem":
        return LpProblem(self.variables, self.lower.copy(), self.upper.copy(), self.objective.copy(),
                         [self.rows[i] for i in rows], self.maximize)

    def __eq__(self, other) -> bool:
        return (isinstance(other, LpProblem) and self.variables == other.variables
                and np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)
                and np.array_equal(self.objective, other.objective) and self.rows == other.rows
                and self.maximize == other.maximize)

    # plain-text format -------------------------------------------------

    def to_text(self) -> str:
        def fmt(x: float) -> str:
            return "inf" if x == math.inf else repr(float(x))

        def linear(coeffs) -> str:
            parts = [f"{'-' if c < 0 else '+'} {fmt(abs(c))} {self.variables[k]}" for k, c in coeffs]
            s = " ".join(parts) or "+ 0"
            return s[2:] if s.startswith("+ ") else s

        lines = ["# tsm-stress LP v1", "maximize:" if self.maximize else "minimize:"]
        obj = [(k, c) for k, c in enumerate(self.objective) if c != 0]
        lines.append("  " + linear(obj))
        lines.append("subject to:")
        for i, row in enumerate(self.rows):
            name = row.name or f"r{i}"
            lines.append(f"  {name}: {linear(row.coeffs)} {row.rel.value} {fmt(row.rhs)}")
        lines.append("bounds:")
        for k, v in enumerate(self.variables):
            lines.append(f"  {fmt(self.lower[k])} <= {v} <= {fmt(self.upper[k])}")
        lines.append("end")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LpProblem":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        maximize = lines[0] == "maximize:"
        obj_line = lines[1]
        i = lines.index("subject to:")
        j = lines.index("bounds:")
        k = lines.index("end")
        variables, lower, upper = [], [], []
        for ln in lines[j + 1:k]:
            lo, v, hi = [p.strip() for p in ln.split("<=")]
            variables.append(v)
            lower.append(float(lo))
            upper.append(float(hi))
        idx = {v: n for n, v in enumerate(variables)}

        def parse_linear(s: str) -> dict:
            toks = s.split()
            if toks and toks[0] not in "+-":
                toks = ["+"] + toks
            out: dict = {}
            for a in range(0, len(toks), 3):
                sign, coef = toks[a], float(toks[a + 1])
                if a + 2 >= len(toks):
                    break
                out[idx[toks[a + 2]]] = out.get(idx[toks[a + 2]], 0.0) + (coef if sign == "+" else -coef)
            return out

        obj = np.zeros(len(variables))
        if obj_line != "0":
            for n, c in parse_linear(obj_line).items():
                obj[n] = c
        rows = []
        for ln in lines[i + 1:j]:
            name, body = ln.split(":", 1)
            for rel in ("<=", ">=", "="):
                if f" {rel} " in body:
                    lhs, rhs = body.rsplit(f" {rel} ", 1)
                    break
            rows.append(Row.make(parse_linear(lhs.strip()), rel, float(rhs), name.strip()))
        return cls(variables, np.array(lower), np.array(upper), obj, rows, maximize)


class Status(str, Enum):
    FEASIBLE = "feasible"
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_SUBSET = "max_subset"


@dataclass
class Solution:
    status: Status
    x: Optional[np.ndarray] = None
    variables: list[str] = field(default_factory=list)
    objective: Optional[float] = None
    active_rows: Optional[list[int]] = None
    conflict: Optional[list[int]] = None
    optimal: bool = True
    bound_gap: float = 0.0
    nodes: int = 0

    @property
    def ok(self) -> bool:
        return self.status in (Status.FEASIBLE, Status.OPTIMAL)

    @property
    def assignment(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return {v: float(val) for v, val in zip(self.variables, self.x)}

    def to_json(self) -> str:
        out = {"status": self.status.value, "assignment": self.assignment}
        if self.objective is not None:
            out["objective"] = self.objective
        if self.active_rows is not None:
            out["active_rows"] = self.active_rows
            out["optimal"] = self.optimal
            out["bound_gap"] = self.bound_gap
        if self.conflict is not None:
            out["conflict"] = self.conflict
        return json.dumps(out, indent=2)
