"""Worst- and best-case inequality systems built from search event times."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence

from .protocol import REQUESTER, TSM, StimulusKind
from .search import backward_search, identify_conditions
from .solver.build import lp_from_inequalities
from .solver.lp import LpProblem
from .symbolic import LinearInequality, Rel, TimeExpr, delay, var_name
from .topology import DomainError, Interval, TimerSpec, TimerStrategy

# Order of simultaneous events in the simulator: timer fires, then request
# deliveries (the request left at t0, before any response), then responses.
TIE_RANK = {
    StimulusKind.RES_TIMER_FIRE: 0,
    StimulusKind.REQ_TIMER_FIRE: 0,
    StimulusKind.REQ_RX: 1,
    StimulusKind.RES_RX: 2,
}

K = StimulusKind

CONSERVATIVE = "conservative"
OPTIMISTIC = "optimistic"


@lru_cache(maxsize=None)
def _canonical_time(kind: StimulusKind, sender_is_q: bool) -> TimeExpr:
    sender = None if not kind.is_reception else (REQUESTER if sender_is_q else 2)
    goal = identify_conditions(TSM, kind, actor=1, sender=sender)
    chains = backward_search(goal, TSM, 2, max_depth=1)
    if not chains:
        raise DomainError(f"{kind.value} is unreachable")
    return chains[0].target.time


def _relabel(expr: TimeExpr, ids: Mapping[int, int]) -> TimeExpr:
    return TimeExpr.make([((v[0],) + tuple(ids.get(k, k) for k in v[1:]), c) for v, c in expr.terms],
                         expr.constant, expr.origin)


@lru_cache(maxsize=None)
def event_time(kind: StimulusKind, actor: int, sender: Optional[int] = None) -> TimeExpr:
    """First-round time of an event, read off the backward-search chain.

    ``ResTx`` is the transmission at the end of the response timer. The
    chain is searched once per event kind with actor 1 (and sender 2) and
    relabelled.
    """
    if actor == REQUESTER:
        raise DomainError("event times are tabulated for responders")
    base = _canonical_time(kind, sender == REQUESTER)
    ids = {1: actor}
    if sender is not None and sender != REQUESTER:
        ids[2] = sender
    return _relabel(base, ids)


def t_req_rx(i: int) -> TimeExpr:
    return event_time(K.REQ_RX, i, REQUESTER)


def t_res_tx(i: int) -> TimeExpr:
    return event_time(K.RES_TX, i)


def t_res_rx(i: int, j: int) -> TimeExpr:
    return event_time(K.RES_RX, i, j)


@dataclass
class ConstraintSystem:
    """Conjuncts plus two-member groups of which one member must hold."""

    conjuncts: list[LinearInequality] = field(default_factory=list)
    groups: list[tuple[LinearInequality, LinearInequality]] = field(default_factory=list)
    bounds: dict = field(default_factory=dict)  # variable name -> Interval
    implied: list[LinearInequality] = field(default_factory=list)
    contradicted: list[LinearInequality] = field(default_factory=list)
    infeasible: bool = False
    meta: dict = field(default_factory=dict)
    # (canonical pair system, a, b) per block when built pair by pair; rows follow block order
    blocks: list = field(default_factory=list, repr=False, compare=False)

    # members of a group: index 0 is "U before C", index 1 is "W before U"
    DEFAULT_CHOICE = 1

    def __add__(self, other: "ConstraintSystem") -> "ConstraintSystem":
        return ConstraintSystem(self.conjuncts + other.conjuncts, self.groups + other.groups,
                                {**self.bounds, **other.bounds}, self.implied + other.implied,
                                self.contradicted + other.contradicted, self.infeasible or other.infeasible,
                                {**self.meta, **other.meta})

    @property
    def variables(self) -> list[str]:
        names = {var_name(v) for q in self.conjuncts for v in q.variables}
        names |= {var_name(v) for g in self.groups for q in g for v in q.variables}
        names |= set(self.bounds)
        return sorted(names)

    @property
    def rows(self) -> int:
        return len(self.conjuncts) + len(self.groups)

    def choose(self, choice: Optional[Sequence[int]] = None) -> list[LinearInequality]:
        """Conjuncts plus one member per group (default: the "W before U" member)."""
        if choice is None:
            choice = [self.DEFAULT_CHOICE] * len(self.groups)
        if len(choice) != len(self.groups):
            raise ValueError("one choice per group")
        return list(self.conjuncts) + [g[c] for g, c in zip(self.groups, choice)]

    def holds(self, assignment: Mapping, ties: bool = True) -> bool:
        """All conjuncts and at least one member of each group hold.

        With ``ties`` an equality is settled the way the simulator orders
        simultaneous events.
        """
        check = (lambda q: holds_event_order(q, assignment)) if ties else (lambda q: q.holds(assignment))
        return all(check(q) for q in self.conjuncts) and all(check(a) or check(b) for a, b in self.groups)

    def to_lp(self, choice: Optional[Sequence[int]] = None, epsilon: float = 1.0, bounds: Optional[Mapping] = None,
              objective: Optional[Mapping] = None, upper: float = float("inf")) -> LpProblem:
        merged = {**self.bounds, **(bounds or {})}
        return lp_from_inequalities(self.choose(choice), epsilon, merged, upper=upper, objective=objective)

    def substitute(self, mapping) -> "ConstraintSystem":
        return _rebuild(self, lambda q: q.substitute(mapping))

    def to_dict(self) -> dict:
        return {
            "conjuncts": [q.to_dict() for q in self.conjuncts],
            "groups": [[a.to_dict(), b.to_dict()] for a, b in self.groups],
            "bounds": {k: v.to_list() for k, v in self.bounds.items()},
            "implied": [q.to_dict() for q in self.implied],
            "contradicted": [q.to_dict() for q in self.contradicted],
            "infeasible": self.infeasible,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConstraintSystem":
        q = LinearInequality.from_dict
        return cls([q(x) for x in data.get("conjuncts", [])], [(q(a), q(b)) for a, b in data.get("groups", [])],
                   {k: Interval.of(v) for k, v in data.get("bounds", {}).items()},
                   [q(x) for x in data.get("implied", [])], [q(x) for x in data.get("contradicted", [])],
                   bool(data.get("infeasible", False)), dict(data.get("meta", {})))


def holds_event_order(q: LinearInequality, assignment: Mapping) -> bool:
    """``q`` read as "lhs event is processed before rhs event" in the simulator."""
    v = q.diff.evaluate(assignment)
    scale = 1e-9 * max(1.0, abs(q.lhs.evaluate(assignment, 0.0)))
    if abs(v) <= scale and q.events:
        a, b = q.events
        return TIE_RANK.get(a, 3) < TIE_RANK.get(b, 3)
    return q.holds(assignment)


def _prune_group(sys: ConstraintSystem, pair: tuple) -> None:
    live = []
    for q in pair:
        st = q.status()
        if st is True:
            sys.implied.append(q)
            return
        if st is False:
            sys.contradicted.append(q)
        else:
            live.append(q)
    if len(live) == 2:
        sys.groups.append((live[0], live[1]))
    elif len(live) == 1:
        sys.conjuncts.append(live[0])
    else:
        sys.infeasible = True


def _add_conjunct(sys: ConstraintSystem, q: LinearInequality) -> None:
    st = q.status()
    if st is True:
        sys.implied.append(q)
    elif st is False:
        sys.contradicted.append(q)
        sys.infeasible = True
    else:
        sys.conjuncts.append(q)


def _rebuild(sys: ConstraintSystem, fn) -> ConstraintSystem:
    out = ConstraintSystem(bounds=dict(sys.bounds), implied=list(sys.implied),
                           contradicted=list(sys.contradicted), infeasible=sys.infeasible, meta=dict(sys.meta))
    for q in sys.conjuncts:
        _add_conjunct(out, fn(q))
    for a, b in sys.groups:
        _prune_group(out, (fn(a), fn(b)))
    return out


def ordering_template(c_time: TimeExpr, w_time: TimeExpr, u_time: TimeExpr, tag: str = "",
                      events: Optional[tuple] = None) -> ConstraintSystem:
    """``t(C) < t(W)`` plus the group ``{t(U) < t(C), t(W) < t(U)}``.

    ``events`` names the stimulus kinds at C, W and U so ties can be
    settled like the simulator does. Members that contradict positivity
    are pruned; a group with an implied member is dropped.
    """
    ec, ew, eu = events or (None, None, None)
    sys = ConstraintSystem()
    if not (c_time - w_time).is_zero():
        _add_conjunct(sys, LinearInequality(c_time, Rel.LT, w_time, f"cond-before-wanted{tag}",
                                            (ec, ew) if events else None))
    before = LinearInequality(u_time, Rel.LT, c_time, f"unwanted-before-cond{tag}", (eu, ec) if events else None)
    after = LinearInequality(w_time, Rel.LT, u_time, f"unwanted-after-wanted{tag}", (ew, eu) if events else None)
    _prune_group(sys, (before, after))
    return sys


def _extend(sys: ConstraintSystem, other: ConstraintSystem, block: Optional[tuple] = None) -> None:
    if block is not None and (sys.blocks or not sys.rows):
        sys.blocks.append(block)
    else:
        sys.blocks.clear()
    sys.conjuncts.extend(other.conjuncts)
    sys.groups.extend(other.groups)
    sys.implied.extend(other.implied)
    sys.contradicted.extend(other.contradicted)
    sys.infeasible = sys.infeasible or other.infeasible


def _relabeled(canon: ConstraintSystem, a: int, b: int, with_diff: bool = False) -> ConstraintSystem:
    """``canon`` built for the pair (1, 2), renamed to the pair (a, b).

    Positivity pruning does not depend on the names, so the template is
    derived and pruned once per system instead of once per pair.
    """
    ids = {1: a, 2: b}
    new_tag = f"({a},{b})"

    def one(q: LinearInequality) -> LinearInequality:
        out = q.relabel(ids, q.tag.replace("(1,2)", new_tag))
        if with_diff:
            out.__dict__["diff"] = q.diff.relabel(ids)
        return out

    return ConstraintSystem([one(q) for q in canon.conjuncts], [(one(x), one(y)) for x, y in canon.groups],
                            implied=[one(q) for q in canon.implied],
                            contradicted=[one(q) for q in canon.contradicted], infeasible=canon.infeasible)


def _check_n(n: int) -> None:
    if n < 1:
        raise DomainError("need at least one responder")


def _pairs_system(sys: ConstraintSystem, canon: ConstraintSystem, pairs, timers: Optional[TimerSpec],
                  policy: str) -> ConstraintSystem:
    """Rename ``canon`` onto every pair, substituting timers first when that is exact."""
    pairs = list(pairs)
    ids = {k for p in pairs for k in p}
    fast = timers is not None and _interchangeable(timers, ids)
    if fast:
        canon = substitute_timers(canon, timers, policy)
    for a, b in pairs:
        _extend(sys, _relabeled(canon, a, b, with_diff=fast), (canon, a, b))
    if timers is None:
        return sys
    if fast:
        sys.meta.update(timers=timers.to_dict(), policy=policy)
        return sys
    return substitute_timers(sys, timers, policy)


def worst_overhead_system(n: int, ordering: Optional[Sequence[int]] = None, timers: Optional[TimerSpec] = None,
                          policy: str = CONSERVATIVE) -> ConstraintSystem:
    """Every responder fires: for each ordered pair (i, j), either i fires
    before hearing j's response, or j's response reaches i before the request.

    ``ordering`` lists responders by increasing ``d(Q,i) + Exp(i)``; pairs
    where i fires first are then satisfied by assumption and dropped.
    With ``timers`` the result equals ``substitute_timers`` applied afterwards.
    """
    _check_n(n)
    sys = ConstraintSystem(meta={"objective": "worst-overhead", "n": n})
    rank = {r: k for k, r in enumerate(ordering)} if ordering is not None else None
    if rank is not None and sorted(rank) != list(range(1, n + 1)):
        raise DomainError("ordering must list every responder once")
    canon = ordering_template(t_req_rx(1), t_res_tx(1), t_res_rx(1, 2), "(1,2)",
                              (K.REQ_RX, K.RES_TIMER_FIRE, K.RES_RX))
    if rank is not None:
        sys.meta["ordering"] = list(ordering)
    pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1)
             if i != j and (rank is None or rank[i] > rank[j])]
    return _pairs_system(sys, canon, pairs, timers, policy)


def best_overhead_system(n: int, designated: int = 1, timers: Optional[TimerSpec] = None,
                         policy: str = CONSERVATIVE) -> ConstraintSystem:
    """Only ``designated`` fires: every other responder hears its request
    and then the designated response before its own timer expires."""
    _check_n(n)
    if not 1 <= designated <= n:
        raise DomainError(f"designated responder {designated} out of range")
    sys = ConstraintSystem(meta={"objective": "best-overhead", "n": n, "designated": designated})
    j = designated
    canon = ordering_template(t_req_rx(1), t_res_rx(1, 2), t_res_tx(1), "(1,2)",
                              (K.REQ_RX, K.RES_RX, K.RES_TIMER_FIRE))
    return _pairs_system(sys, canon, [(i, j) for i in range(1, n + 1) if i != j], timers, policy)


def strictness_margin(sys: ConstraintSystem, epsilon: float) -> ConstraintSystem:
    """Rewrite every strict ``a < b`` as ``a <= b - epsilon``."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    out = _rebuild(sys, lambda q: q.margined(epsilon))
    out.meta["epsilon"] = epsilon
    return out


# -- timer substitution -----------------------------------------------------------


@lru_cache(maxsize=None)
def _distance(i: int) -> TimeExpr:
    return TimeExpr.make({delay(i, REQUESTER): 0.5, delay(REQUESTER, i): 0.5})


def timer_value(spec: TimerSpec, i: int, sign: float, policy: str = CONSERVATIVE):
    """Value substituted for ``Exp(i)`` whose coefficient in ``lhs - rhs`` has ``sign``.

    Conservative takes the end of the range that makes the inequality
    hardest to meet; optimistic takes the midpoint.
    """
    if policy not in (CONSERVATIVE, OPTIMISTIC):
        raise DomainError(f"unknown policy {policy!r}")
    if spec.strategy == TimerStrategy.FIXED:
        iv = spec.fixed_interval(i)
        if policy == OPTIMISTIC:
            return iv.mid
        return iv.hi if sign > 0 else iv.lo
    lo, hi = spec.coefficients()
    k = (lo + hi) / 2 if policy == OPTIMISTIC else (hi if sign > 0 else lo)
    return _distance(i).scale(k)


def _interchangeable(spec: TimerSpec, ids: set) -> bool:
    """Whether every responder in ``ids`` gets the same timer rule, up to renaming."""
    if spec.strategy != TimerStrategy.FIXED:
        return True
    try:
        return len({spec.fixed_interval(i) for i in ids | {1, 2}}) == 1
    except DomainError:
        return False


def substitute_timers(sys: ConstraintSystem, spec: TimerSpec, policy: str = CONSERVATIVE) -> ConstraintSystem:
    """Replace response-timer variables by values from ``spec``."""
    ids = {k for _, a, b in sys.blocks for k in (a, b)}
    if sys.blocks and _interchangeable(spec, ids):
        # substitute the canonical pair once and rename it per block
        out = ConstraintSystem(bounds=dict(sys.bounds), meta=dict(sys.meta))
        done: dict = {}
        for canon, a, b in sys.blocks:
            if id(canon) not in done:
                done[id(canon)] = substitute_timers(canon, spec, policy)
            sub = done[id(canon)]
            _extend(out, _relabeled(sub, a, b, with_diff=True), (sub, a, b))
        out.meta.update(timers=spec.to_dict(), policy=policy)
        return out

    memo: dict = {}
    values: dict = {}

    def side(expr: TimeExpr, flip: float) -> TimeExpr:
        key = (expr, flip)
        if key in memo:
            return memo[key]
        mapping = {}
        for v, c in expr.terms:
            if v[0] == "Exp" and v[1] != REQUESTER:
                tk = (v[1], c * flip > 0)
                if tk not in values:
                    values[tk] = timer_value(spec, v[1], c * flip, policy)
                mapping[v] = values[tk]
        memo[key] = out = expr.substitute(mapping)
        return out

    out = _rebuild(sys, lambda q: LinearInequality(side(q.lhs, 1), q.rel, side(q.rhs, -1), q.tag, q.events))
    out.meta["timers"] = spec.to_dict()
    out.meta["policy"] = policy
    return out


def midpoint_ordering(spec: TimerSpec, n: int, dq: Mapping[int, float]) -> list[int]:
    """Responders by increasing ``d(Q,i) + Exp(i)`` at midpoint timer values."""
    def key(i: int) -> tuple:
        if spec.strategy == TimerStrategy.FIXED:
            e = spec.fixed_interval(i).mid
        else:
            lo, hi = spec.coefficients()
            e = (lo + hi) / 2 * dq[i]
        return (dq[i] + e, i)
    return sorted(range(1, n + 1), key=key)
