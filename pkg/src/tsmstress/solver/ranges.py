"""Timer bounds that hold for every delay inside given intervals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Union

from ..symbolic import LinearInequality, Rel, TimeExpr, Var, var_name
from ..topology import DomainError, Interval


@dataclass(frozen=True)
class TimerBound:
    """``timers rel bound``: e.g. ``Exp(1) - Exp(2) < -196``."""

    timers: TimeExpr
    rel: Rel
    bound: float
    tag: str = ""

    @property
    def pair(self) -> Optional[tuple[int, int]]:
        """(i, j) when the timer part is exactly ``Exp(i) - Exp(j)``."""
        c = self.timers.coeffs
        if len(c) != 2:
            return None
        pos = [v[1] for v, k in c.items() if k == 1]
        neg = [v[1] for v, k in c.items() if k == -1]
        if len(pos) == 1 and len(neg) == 1:
            return pos[0], neg[0]
        return None

    def holds(self, values: Mapping) -> bool:
        v = self.timers.evaluate(values)
        return v < self.bound if self.rel == Rel.LT else v <= self.bound

    def __str__(self) -> str:
        return f"{self.timers} {self.rel.value} {self.bound:g}"


IntervalSource = Union[Interval, Mapping[Var, Interval], Callable[[Var], Interval]]


def _lookup(intervals: IntervalSource) -> Callable[[Var], Interval]:
    if isinstance(intervals, Interval):
        return lambda v: intervals
    if callable(intervals):
        return intervals
    def get(v: Var) -> Interval:
        if v in intervals:
            return intervals[v]
        name = var_name(v)
        if name in intervals:
            return intervals[name]
        raise DomainError(f"no interval for {name}")
    return get


def solve_symbolic_range(ineqs: Iterable[LinearInequality], intervals: IntervalSource) -> list[TimerBound]:
    """Move delay terms to the right and take their minimum over the intervals.

    ``timers + delays < 0`` for every delay choice iff
    ``timers < min(-delays)``. Inequalities without timer variables are
    skipped.
    """
    lookup = _lookup(intervals)
    out = []
    for ineq in ineqs:
        diff = ineq.diff
        timers = TimeExpr.make([(v, c) for v, c in diff.terms if v[0] == "Exp"])
        if not timers.terms:
            continue
        low = -float(diff.constant)
        for v, c in diff.terms:
            if v[0] != "d":
                continue
            iv = lookup(v)
            # minimum of -c * v over the interval
            low += min(-c * iv.lo, -c * iv.hi)
        out.append(TimerBound(timers, ineq.rel, low, ineq.tag))
    return out


def pairwise_bounds(bounds: Iterable[TimerBound]) -> dict[tuple[int, int], float]:
    """Tightest ``Exp_i - Exp_j < b`` per ordered pair."""
    out: dict[tuple[int, int], float] = {}
    for b in bounds:
        pair = b.pair
        if pair is not None:
            out[pair] = min(out.get(pair, b.bound), b.bound)
    return out
