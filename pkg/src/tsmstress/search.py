"""Fault-oriented search over the global FSM.

Backward search walks from a target stimulus to the initial loss at the
requester using three implication rules; forward verification replays a
candidate chain through ``apply`` and rejects it when the global state
contradicts it. Times are symbolic offsets from ``t0``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .protocol import (INITIAL_STATE, REQUESTER, TIMER_FIRE_OF, TIMER_STATE_OF, TSM, GlobalState, Role,
                       StateSymbol, Stimulus, StimulusKind, TransitionTable, apply, initial_global_state,
                       reachable_states, role_of)
from .solver.build import lp_from_inequalities
from .solver.simplex import solve_feasibility
from .symbolic import LinearInequality, Rel, TimeExpr, delay, timer
from .topology import Interval, LossPattern, MessageId, Relation, backward_offset_interval, interval_cmp_branches

TX_RCV = "Tx_Rcv"
TMR_EXP = "Tmr_Exp"
ST_CR = "St_Cr"


class GoalError(ValueError):
    pass


class Objective(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


@dataclass(frozen=True)
class TimedEvent:
    stimulus: Stimulus
    time: TimeExpr
    transition: Optional[str] = None  # row symbol applied when the event is processed
    rule: Optional[str] = None  # implication rule that derived this event from its successor

    def to_dict(self) -> dict:
        s = self.stimulus
        return {"kind": s.kind.value, "actor": s.actor, "sender": s.sender, "time": str(self.time),
                "transition": self.transition, "rule": self.rule}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TimedEvent":
        stim = Stimulus(StimulusKind(data["kind"]), int(data["actor"]),
                        None if data.get("sender") is None else int(data["sender"]))
        return cls(stim, TimeExpr.parse(data["time"]), data.get("transition"), data.get("rule"))

    def __str__(self) -> str:
        return f"{self.stimulus} @ {self.time}"


@dataclass(frozen=True)
class NoResetWindow:
    """A timer armed at ``opened`` must not be cleared before it fires at ``fired``."""

    actor: int
    state: StateSymbol
    opened: TimeExpr
    fired: TimeExpr
    unwanted: tuple = ()  # rows that would clear the timer early

    def to_dict(self) -> dict:
        return {"actor": self.actor, "state": self.state.value, "opened": str(self.opened),
                "fired": str(self.fired), "unwanted": list(self.unwanted)}


@dataclass
class TimedSequence:
    events: list[TimedEvent]
    constraints_used: list[LinearInequality] = field(default_factory=list)
    windows: list[NoResetWindow] = field(default_factory=list)
    truncated: bool = False
    losses: LossPattern = field(default_factory=LossPattern)
    meta: dict = field(default_factory=dict)

    @property
    def target(self) -> TimedEvent:
        return self.events[-1]

    @property
    def duration(self) -> TimeExpr:
        """Target time minus t0."""
        return self.target.time - TimeExpr.t0()

    def check(self, table: TransitionTable = TSM) -> None:
        for ev in self.events:
            if ev.transition is not None and table.row(ev.transition).trigger != ev.stimulus.kind:
                raise GoalError(f"{ev}: row {ev.transition} is not triggered by {ev.stimulus.kind.value}")

    def to_dict(self) -> dict:
        return {"events": [e.to_dict() for e in self.events],
                "constraints": [q.to_dict() for q in self.constraints_used],
                "windows": [w.to_dict() for w in self.windows],
                "truncated": self.truncated, "losses": self.losses.to_list(), "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "TimedSequence":
        return cls([TimedEvent.from_dict(e) for e in data["events"]],
                   [LinearInequality.from_dict(q) for q in data.get("constraints", [])],
                   truncated=data.get("truncated", False), losses=LossPattern.from_list(data.get("losses", [])),
                   meta=dict(data.get("meta", {})))

    def __str__(self) -> str:
        return " => ".join(str(e) for e in self.events)


@dataclass(frozen=True)
class SearchGoal:
    target: StimulusKind
    objective: Objective
    wanted: frozenset
    unwanted: frozenset
    actor: Optional[int] = None
    sender: Optional[int] = None

    def __post_init__(self):
        if self.wanted & self.unwanted:
            raise GoalError(f"rows both wanted and unwanted: {sorted(self.wanted & self.unwanted)}")


# -- goals -------------------------------------------------------------------

_INITIAL_STATES = frozenset(INITIAL_STATE.values())


def _condition_states(row) -> set:
    out = set(row.start)
    if row.trigger in TIMER_STATE_OF:
        out.add(TIMER_STATE_OF[row.trigger])
    return out


def identify_conditions(table: TransitionTable, target: StimulusKind, objective: Objective = Objective.MAXIMIZE,
                        actor: Optional[int] = None, sender: Optional[int] = None) -> SearchGoal:
    """Wanted rows emit the target or (recursively) create its start-state
    condition; unwanted rows leave that condition without emitting it.
    Minimizing swaps the emitters and the unwanted rows.
    """
    target = StimulusKind(target)
    direct = table.emitters(target) or [r for r in table if r.trigger == target]
    if not direct:
        raise GoalError(f"{target.value} does not occur in the table")
    wanted = {r.symbol for r in direct}
    cond: set = set()
    for r in direct:
        cond |= _condition_states(r)
    seen: set = set()
    frontier = [s for s in cond if s not in _INITIAL_STATES]
    while frontier:
        st = frontier.pop()
        if st in seen:
            continue
        seen.add(st)
        for r in table.creators(st):
            wanted.add(r.symbol)
            frontier.extend(s for s in _condition_states(r) if s not in _INITIAL_STATES and s not in seen)
    unwanted = {r.symbol for r in table
                if r.symbol not in wanted and target not in r.emits and any(s in cond for s in r.start)}
    if objective == Objective.MINIMIZE:
        emit = {r.symbol for r in direct}
        wanted, unwanted = unwanted | (wanted - emit), emit
    return SearchGoal(target, Objective(objective), frozenset(wanted), frozenset(unwanted), actor, sender)


# -- which stimuli can occur where ---------------------------------------------

def _occurrence(table: TransitionTable, n: int) -> dict[Role, set]:
    """Stimulus kinds each role can experience (fixed point over the table)."""
    roles = [Role.REQUESTER, Role.RESPONDER]
    reach = {r: reachable_states(table, r) for r in roles}
    occ: dict[Role, set] = {Role.REQUESTER: {StimulusKind.LOSS}, Role.RESPONDER: set()}
    for r in roles:
        occ[r] |= {TIMER_FIRE_OF[s] for s in reach[r] if s in TIMER_FIRE_OF}
    sent: dict[StimulusKind, set] = {}
    changed = True
    while changed:
        changed = False
        for role in roles:
            for row in table:
                if row.trigger not in occ[role] or (row.start and not set(row.start) & reach[role]):
                    continue
                for k in row.emits:
                    if k.is_reception:
                        if role not in sent.setdefault(k, set()):
                            sent[k].add(role)
                            changed = True
                    elif k not in occ[role]:
                        occ[role].add(k)
                        changed = True
        for k, senders in sent.items():
            for role in roles:
                # a lone requester never hears its own multicast
                heard = any(s != role or (role == Role.RESPONDER and n > 1) for s in senders)
                if heard and k not in occ[role]:
                    occ[role].add(k)
                    changed = True
    return occ


def _senders(table: TransitionTable, kind: StimulusKind, actor: int, n: int, occ) -> list[int]:
    """Systems that can multicast reception ``kind`` to ``actor``."""
    tx = {r.trigger for r in table.emitters(kind)}
    return [s for s in range(n + 1) if s != actor and tx & occ[role_of(s)]]


# -- backward search -------------------------------------------------------------

def is_initial(s: Stimulus) -> bool:
    return s.kind == StimulusKind.LOSS and s.actor == REQUESTER


def _rearms(table: TransitionTable, kind: StimulusKind) -> bool:
    """True if the fire row of ``kind`` leaves the actor in the timer state again."""
    st = TIMER_STATE_OF.get(kind)
    if st is None:
        return False
    row = table.match(kind, st)
    return row is not None and row.end_for(st) == st


def _delta(rule: str, pred: Stimulus, succ: Stimulus) -> TimeExpr:
    if rule == TX_RCV:
        return TimeExpr.var(delay(pred.actor, succ.actor))
    if rule == TMR_EXP:
        return TimeExpr.var(timer(succ.actor))
    return TimeExpr()


def predecessors(table: TransitionTable, s: Stimulus, n: int, occ=None) -> list[tuple[Stimulus, str, str]]:
    """(predecessor stimulus, row it triggers, rule) for every matching implication rule."""
    occ = occ or _occurrence(table, n)
    out = []
    if is_initial(s):
        return out
    if s.kind.is_reception:
        for row in table.emitters(s.kind):
            if row.trigger in occ[role_of(s.sender)]:
                out.append((Stimulus(row.trigger, s.sender), row.symbol, TX_RCV))
        return out

    def with_senders(kind: StimulusKind) -> list[Stimulus]:
        if kind.is_reception:
            return [Stimulus(kind, s.actor, j) for j in _senders(table, kind, s.actor, n, occ)]
        return [Stimulus(kind, s.actor)] if kind in occ[role_of(s.actor)] else []

    if s.kind.is_timer_fire:
        st = TIMER_STATE_OF[s.kind]
        arming = [r for r in table.creators(st)]
        if _rearms(table, s.kind):
            arming.append(table.match(s.kind, st))
        for row in arming:
            for p in with_senders(row.trigger):
                out.append((p, row.symbol, TMR_EXP))
        return out
    for row in table.emitters(s.kind):
        for p in with_senders(row.trigger):
            out.append((p, row.symbol, ST_CR))
    return out


def backward_step(ev: TimedEvent, table: TransitionTable = TSM, n: int = 1
                  ) -> list[tuple[TimedEvent, str, Optional[NoResetWindow]]]:
    """Predecessor events of ``ev`` with the rule used and any no-reset window."""
    out = []
    for p, row, rule in predecessors(table, ev.stimulus, n):
        t = ev.time - _delta(rule, p, ev.stimulus)
        window = None
        if rule == TMR_EXP:
            window = _window(table, ev.stimulus, t, ev.time)
        out.append((TimedEvent(p, t, row, rule), rule, window))
    return out


def _window(table: TransitionTable, fire: Stimulus, opened: TimeExpr, fired: TimeExpr) -> NoResetWindow:
    st = TIMER_STATE_OF[fire.kind]
    clear = tuple(r.symbol for r in table if st in r.start and r.end_for(st) != st and r.trigger != fire.kind)
    return NoResetWindow(fire.actor, st, opened, fired, clear)


class _Backward:
    def __init__(self, table: TransitionTable, n: int):
        self.table, self.n = table, n
        self.occ = _occurrence(table, n)
        self.memo: dict = {}

    def paths(self, s: Stimulus, rounds: int) -> list[tuple[tuple, bool]]:
        """Chains ``((stimulus, row, rule), ...)`` from an initial event up to ``s``."""
        key = (s, rounds)
        if key in self.memo:
            return self.memo[key]
        if is_initial(s):
            res = [(((s, None, None),), False)]
        else:
            res = []
            for p, row, rule in predecessors(self.table, s, self.n, self.occ):
                left = rounds
                if p.kind.is_timer_fire and _rearms(self.table, p.kind):
                    if rounds <= 1:
                        res.append((((p, row, rule), (s, None, None)), True))
                        continue
                    left = rounds - 1
                for path, trunc in self.paths(p, left):
                    res.append((path[:-1] + ((p, row, rule), (s, None, None)), trunc))
        self.memo[key] = res
        return res


def _to_sequence(table: TransitionTable, path: tuple, truncated: bool) -> TimedSequence:
    events = []
    windows = []
    t = TimeExpr.t0()
    for k, (s, row, rule) in enumerate(path):
        if k:
            prev = path[k - 1]
            t = t + _delta(prev[2], prev[0], s)
            if prev[2] == TMR_EXP:
                windows.append(_window(table, s, events[-1].time, t))
        events.append(TimedEvent(s, t, row, rule))
    return TimedSequence(events, windows=windows, truncated=truncated)


def _targets(goal: SearchGoal, table: TransitionTable, n: int, occ) -> list[Stimulus]:
    actors = [goal.actor] if goal.actor is not None else list(range(n + 1))
    out = []
    for a in actors:
        if goal.target not in occ[role_of(a)]:
            continue
        if goal.target.is_reception:
            senders = _senders(table, goal.target, a, n, occ)
            if goal.sender is not None:
                senders = [j for j in senders if j == goal.sender]
            out.extend(Stimulus(goal.target, a, j) for j in senders)
        else:
            out.append(Stimulus(goal.target, a))
    return out


def backward_search(goal: SearchGoal, table: TransitionTable = TSM, n: int = 1, max_depth: Optional[int] = None,
                    include_truncated: bool = False) -> list[TimedSequence]:
    """All derivation chains from the initial loss at Q to the goal target.

    ``max_depth`` bounds the number of request rounds (fires of a timer
    that re-arms itself); deeper chains are flagged truncated and dropped
    unless ``include_truncated``.
    """
    if max_depth is None:
        max_depth = 4 * n
    if max_depth < 1:
        raise GoalError("max_depth must be at least 1")
    bw = _Backward(table, n)
    out = []
    for s in _targets(goal, table, n, bw.occ):
        for path, trunc in bw.paths(s, max_depth):
            if trunc and not include_truncated:
                continue
            seq = _to_sequence(table, path, trunc)
            seq.meta["goal"] = {"target": goal.target.value, "objective": goal.objective.value,
                                "wanted": sorted(goal.wanted), "unwanted": sorted(goal.unwanted)}
            out.append(seq)
    return out


# -- forward verification ----------------------------------------------------------

PRIO_TIMER, PRIO_DELIVERY = 0, 1
_VIRTUAL = None


@dataclass(frozen=True)
class _Pending:
    time: TimeExpr
    prio: int
    actor: int
    seq: int
    stim: Stimulus


@dataclass
class Verdict:
    accepted: bool
    reason: str = ""
    state: Optional[GlobalState] = None
    constraints: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    progress: int = 0

    def __bool__(self) -> bool:
        return self.accepted


class _Node:
    def __init__(self, g: GlobalState):
        self.g = g
        self.pending: list[_Pending] = []
        self.sent: dict = {}
        self.seq = 0
        self.idx = 0
        self.cons: list[LinearInequality] = []
        self.trace: list[TimedEvent] = []

    def clone(self) -> "_Node":
        c = _Node(self.g)
        c.pending = list(self.pending)
        c.sent = dict(self.sent)
        c.seq, c.idx = self.seq, self.idx
        c.cons = list(self.cons)
        c.trace = list(self.trace)
        return c


class _Reject(Exception):
    pass


class _Replay:
    """Forward replay of a chain; symbolic (LP-pruned branching) or concrete."""

    def __init__(self, seq: TimedSequence, table: TransitionTable, losses: LossPattern, n: int,
                 assignment: Optional[Mapping], epsilon: float, bounds: Optional[Mapping], assumptions):
        self.chain = seq.events
        self.table, self.losses, self.n = table, losses, n
        self.assignment = assignment
        self.epsilon, self.bounds = epsilon, bounds
        self.base = list(seq.constraints_used) + list(assumptions)
        # extra timer rounds beyond the chain's own are never needed to reach it
        self.max_events = 4 * len(self.chain) + 4 * (n + 1)

    # time comparison ---------------------------------------------------------
    def value(self, t: TimeExpr) -> float:
        return t.evaluate(self.assignment)

    def same_time(self, a: TimeExpr, b: TimeExpr) -> bool:
        if self.assignment is not None:
            return abs(self.value(a) - self.value(b)) <= 1e-9 * max(1.0, abs(self.value(a)))
        return (a - b).is_zero()

    def feasible(self, cons: list) -> bool:
        live = []
        for q in cons:
            st = q.status()
            if st is False:
                return False
            if st is None:
                live.append(q)
        if not live:
            return True
        p = lp_from_inequalities(live, self.epsilon, self.bounds)
        return solve_feasibility(p, conflict=False).ok

    # event processing ----------------------------------------------------------
    def reject(self, node: _Node, what: str) -> None:
        raise _Reject(f"chain event {what} cannot be reached from {node.g}")

    def process(self, node: _Node, stim: Stimulus, t: TimeExpr) -> None:
        before = node.g[stim.actor]
        row = self.table.match(stim.kind, before)
        # chain bookkeeping
        if node.idx < len(self.chain):
            ev = self.chain[node.idx]
            if ev.stimulus == stim and self.same_time(ev.time, t):
                ok = row is not None and (ev.transition is None or row.symbol == ev.transition)
                if not ok:
                    self.reject(node, str(ev.stimulus))
                node.idx += 1
            else:
                for later in self.chain[node.idx + 1:]:
                    if later.stimulus == stim and self.same_time(later.time, t):
                        raise _Reject(f"chain event {later.stimulus} occurs before "
                                      f"{self.chain[node.idx].stimulus} in {node.g}")
        g2, emitted = apply(self.table, node.g, stim)
        node.g = GlobalState(g2.per_system, frozenset())
        node.trace.append(TimedEvent(stim, t, row.symbol if row else None))
        after = node.g[stim.actor]
        # timers: leaving a timer state cancels, entering (or re-arming by firing) arms
        if before in TIMER_FIRE_OF and after != before:
            node.pending = [p for p in node.pending if not (p.prio == PRIO_TIMER and p.actor == stim.actor)]
        if after in TIMER_FIRE_OF and row is not None and (after != before or stim.kind == TIMER_FIRE_OF[after]):
            node.pending = [p for p in node.pending if not (p.prio == PRIO_TIMER and p.actor == stim.actor)]
            node.seq += 1
            node.pending.append(_Pending(t + TimeExpr.var(timer(stim.actor)), PRIO_TIMER, stim.actor, node.seq,
                                         Stimulus(TIMER_FIRE_OF[after], stim.actor)))
        local = [e for e in emitted if not e.kind.is_reception]
        remote = [e for e in emitted if e.kind.is_reception]
        if remote:
            key = (stim.actor, stim.kind)
            node.sent[key] = node.sent.get(key, 0) + 1
            msg = MessageId(stim.actor, stim.kind, node.sent[key])
            for e in remote:
                if self.losses.dropped(msg, e.actor):
                    continue
                node.seq += 1
                node.pending.append(_Pending(t + TimeExpr.var(delay(stim.actor, e.actor)), PRIO_DELIVERY, e.actor,
                                             node.seq, e))
        for e in local:
            self.process(node, e, t)

    # ordering --------------------------------------------------------------------
    def _before(self, a: _Pending, b) -> LinearInequality:
        """Constraint under which ``a`` is processed before ``b`` (b may be the chain checkpoint)."""
        if b is _VIRTUAL:
            return LinearInequality(a.time, Rel.LE, self._cp.time, "order")
        win = (a.prio, a.actor, a.seq) < (b.prio, b.actor, b.seq)
        return LinearInequality(a.time, Rel.LE if win else Rel.LT, b.time, "order")

    def candidates(self, node: _Node) -> list:
        self._cp = self.chain[node.idx]
        items = list(node.pending) + [_VIRTUAL]
        if self.assignment is not None:
            if not node.pending:
                return [(_VIRTUAL, [])]
            first = min(node.pending, key=lambda p: (self.value(p.time), p.prio, p.actor, p.seq))
            if self.value(self._cp.time) < self.value(first.time) - 1e-9 * max(1.0, abs(self.value(first.time))):
                return [(_VIRTUAL, [])]
            return [(first, [])]
        out = []
        for c in items:
            new = []
            for o in items:
                if o is c:
                    continue
                if c is _VIRTUAL:
                    new.append(LinearInequality(self._cp.time, Rel.LT, o.time, "order"))
                else:
                    new.append(self._before(c, o))
            if any(q.status() is False for q in new):
                continue
            new = [q for q in new if q.status() is None]
            have = set(node.cons)
            new = list(dict.fromkeys(q for q in new if q not in have))
            if self.feasible(self.base + node.cons + new):
                out.append((c, new))
        # try the event the chain expects first, then the rest in queue order
        out.sort(key=lambda cn: (cn[0] is _VIRTUAL, not self._matches(cn[0])))
        return out

    def _matches(self, c) -> bool:
        return c is not _VIRTUAL and c.stim == self._cp.stimulus and self.same_time(c.time, self._cp.time)

    def run(self, max_branches: int) -> Verdict:
        root = _Node(initial_global_state(self.n))
        rejections: list[Verdict] = []
        if not self.feasible(self.base):
            return Verdict(False, "assumptions are infeasible", root.g)
        stack = []
        first = self.chain[0]
        try:
            self.process(root, first.stimulus, first.time)
            stack.append(root)
        except _Reject as exc:
            rejections.append(Verdict(False, str(exc), root.g, progress=root.idx))
        branches = 0
        while stack:
            node = stack.pop()
            try:
                while node.idx < len(self.chain):
                    if len(node.trace) > self.max_events:
                        raise _Reject(f"event budget exhausted before {self.chain[node.idx].stimulus}")
                    cands = self.candidates(node)
                    if not cands:
                        self.reject(node, str(self.chain[node.idx].stimulus))
                    if len(cands) > 1:
                        branches += len(cands) - 1
                        if branches > max_branches:
                            raise _Reject("branch limit reached")
                        for c, new in reversed(cands[1:]):
                            child = node.clone()
                            child.cons.extend(new)
                            stack.append(self._step(child, c))
                    c, new = cands[0]
                    node.cons.extend(new)
                    node = self._step(node, c)
                return Verdict(True, "", node.g, self.base + node.cons, node.trace, node.idx)
            except _Reject as exc:
                rejections.append(Verdict(False, str(exc), node.g, node.cons, node.trace, node.idx))
        best = max(rejections, key=lambda v: v.progress) if rejections else Verdict(False, "no branch")
        # prefer the earliest rejection among equally advanced branches
        best = next(v for v in rejections if v.progress == best.progress) if rejections else best
        return best

    def _step(self, node: _Node, c) -> _Node:
        if c is _VIRTUAL:
            # nothing still pending can produce the chain event in time
            self.reject(node, str(self.chain[node.idx].stimulus))
        node.pending.remove(c)
        self.process(node, c.stim, c.time)
        return node


def forward_verify(seq: TimedSequence, table: TransitionTable = TSM, losses: Optional[LossPattern] = None,
                   n: Optional[int] = None, assignment: Optional[Mapping] = None, epsilon: float = 1.0,
                   bounds: Optional[Mapping] = None, assumptions: Iterable[LinearInequality] = (),
                   max_branches: int = 256) -> Verdict:
    """Replay ``seq`` forward from the initial global state.

    Without ``assignment`` the next-event order is branched symbolically and
    each branch is kept only if its ordering constraints are LP-feasible.
    With an assignment the replay is a single concrete run. Accepted iff
    every chain event occurs at its time and triggers its row.
    """
    if losses is None:
        losses = seq.losses
    if n is None:
        n = max(max(e.stimulus.actor, e.stimulus.sender or 0) for e in seq.events)
    if not seq.events:
        return Verdict(False, "empty sequence")
    return _Replay(seq, table, losses, n, assignment, epsilon, bounds, assumptions).run(max_branches)


# -- interval branching over pending timers and messages -------------------------------

@dataclass(frozen=True)
class PendingValue:
    """A running timer or in-flight message with an interval-valued remaining time.

    In backward mode ``value`` is the look-back to the moment the item was
    started; ``offset`` marks a timer caught at an arbitrary point ``x`` of
    its run, whose look-back is ``Exp - x``.
    """

    label: str
    value: Interval
    is_timer: bool = False
    offset: bool = False

    def reach(self) -> Interval:
        return backward_offset_interval(self.value) if self.offset else self.value


@dataclass(frozen=True)
class Condition:
    a: str
    rel: Relation
    b: str
    # for offset timers: ways the condition can hold stated over the full
    # timer durations, empty when it always holds
    alternatives: tuple = ()

    def __str__(self) -> str:
        s = f"{self.a} {self.rel.value} {self.b}"
        if self.alternatives:
            s += " if " + " or ".join(f"{a} {r.value} {b}" for a, r, b in self.alternatives)
        return s


@dataclass(frozen=True)
class Branch:
    first: tuple[str, ...]
    conditions: tuple[Condition, ...]
    successor: tuple[PendingValue, ...]


_FLIP = {Relation.LT: Relation.GT, Relation.GT: Relation.LT, Relation.EQ: Relation.EQ}


def _condition(a: PendingValue, rel: Relation, b: PendingValue) -> Optional[Condition]:
    """``a rel b`` on the compared values, or None if no interval values allow it."""
    if rel not in interval_cmp_branches(a.reach(), b.reach()):
        return None
    if a.offset == b.offset:
        return Condition(a.label, rel, b.label)
    if a.offset:
        c = _condition(b, _FLIP[rel], a)
        return None if c is None else Condition(a.label, rel, b.label,
                                                tuple((y, _FLIP[r], x) for x, r, y in c.alternatives))
    # a has a plain value, b = Exp_b - x with x in [0, Exp_b]
    full = interval_cmp_branches(a.value, b.value)
    exp_b = f"Exp[{b.label}]"
    if rel == Relation.GT:
        alts: tuple = ()
    elif rel == Relation.EQ:
        alts = tuple((a.label, r, exp_b) for r in (Relation.EQ, Relation.LT) if r in full)
    else:
        alts = ((a.label, Relation.LT, exp_b),) if Relation.LT in full else None
    if alts is None or (rel != Relation.GT and not alts):
        return None
    return Condition(a.label, rel, b.label, alts)


def _elapse(items: Sequence[PendingValue], by: Interval) -> tuple[PendingValue, ...]:
    out = []
    for it in items:
        r = it.reach()
        out.append(PendingValue(it.label, Interval(max(0.0, r.lo - by.hi), max(0.0, r.hi - by.lo)), it.is_timer))
    return tuple(out)


def multi_round_branches(pending: Sequence[PendingValue], mode: str = "forward") -> list[Branch]:
    """Next-event branches over interval-valued timers and messages.

    Forward, the item with the smallest remaining value fires next and the
    others are decremented. Backward, the item with the smallest look-back
    is the most recent predecessor; offset timers compare as ``Exp - x``.
    Any group that can coincide also yields a simultaneous branch.
    """
    if mode not in ("forward", "backward"):
        raise ValueError(f"unknown mode {mode!r}")
    if not pending:
        raise ValueError("need at least one pending timer or message")
    items = list(pending)
    out = []
    for e in items:
        conds = [_condition(e, Relation.LT, f) for f in items if f is not e]
        if all(c is not None for c in conds):
            out.append(Branch((e.label,), tuple(conds), _elapse([f for f in items if f is not e], e.reach())))
    for size in range(2, len(items) + 1):
        for group in itertools.combinations(items, size):
            e = group[0]
            eqs = [_condition(e, Relation.EQ, f) for f in group[1:]]
            if any(c is None for c in eqs):
                continue
            rest = [g for g in items if all(g is not x for x in group)]
            conds = [_condition(e, Relation.LT, g) for g in rest]
            if all(c is not None for c in conds):
                out.append(Branch(tuple(x.label for x in group), (*eqs, *conds), _elapse(rest, e.reach())))
    return out


# -- response time ------------------------------------------------------------------

def round_trip_assumptions(n: int) -> list[LinearInequality]:
    """The request timer outlasts every request/response round trip."""
    out = []
    for j in range(1, n + 1):
        rtt = TimeExpr.var(delay(REQUESTER, j)) + TimeExpr.var(timer(j)) + TimeExpr.var(delay(j, REQUESTER))
        out.append(LinearInequality(rtt, Rel.LT, TimeExpr.var(timer(REQUESTER)), f"rtt({j})"))
    return out


def _response_goal(table: TransitionTable, sender: Optional[int] = None) -> SearchGoal:
    return identify_conditions(table, StimulusKind.RES_RX, Objective.MAXIMIZE, actor=REQUESTER, sender=sender)


def _loss_patterns(n: int, rounds: int, budget: int) -> list[LossPattern]:
    msgs = [(j, k) for j in range(1, n + 1) for k in range(1, rounds + 1)]
    out = []
    for size in range(budget + 1):
        for combo in itertools.combinations(msgs, size):
            lp = LossPattern()
            for j, k in combo:
                lp = lp | LossPattern.single(j, StimulusKind.RES_TX, k, REQUESTER)
            out.append(lp)
    return out


def _rounds(seq: TimedSequence) -> int:
    return 1 + sum(1 for e in seq.events if e.stimulus.kind == StimulusKind.REQ_TIMER_FIRE)


def max_response_time_search(table: TransitionTable = TSM, n: int = 1, loss_budget: int = 1,
                             assignment: Optional[Mapping] = None, max_depth: Optional[int] = None,
                             designated: Optional[int] = None, epsilon: float = 1.0) -> TimedSequence:
    """The feasible sequence with the latest first response at the requester.

    With one responder every chain and every placement of up to
    ``loss_budget`` response losses is verified forward. With several, the
    designated responder's responses are lost at Q and all others must be
    suppressed in every round; a witness assignment is solved and replayed.
    """
    if loss_budget < 0:
        raise GoalError("loss budget must be non-negative")
    if max_depth is None:
        max_depth = max(4 * n, loss_budget + 1)
    if loss_budget >= n * max_depth:
        return TimedSequence([], meta={"unbounded": True, "reason": "every response can be lost"})
    assume = round_trip_assumptions(n)
    if n == 1:
        return _single_responder(table, loss_budget, assignment, max_depth, epsilon, assume)
    return _multi_responder(table, n, loss_budget, assignment, designated, epsilon, assume)


def _single_responder(table, budget, assignment, max_depth, epsilon, assume) -> TimedSequence:
    chains = backward_search(_response_goal(table), table, 1, max_depth)
    rounds = max(_rounds(c) for c in chains)
    best, best_key, rejected = None, None, []
    for chain in chains:
        for losses in _loss_patterns(1, rounds, budget):
            v = forward_verify(chain, table, losses, 1, assignment, epsilon, assumptions=assume)
            if not v.accepted:
                rejected.append({"rounds": _rounds(chain), "losses": losses.to_list(), "reason": v.reason})
                continue
            dur = chain.duration
            key = (dur.evaluate(assignment) if assignment is not None else dur.coeffs.get(timer(REQUESTER), 0),
                   -len(losses))
            if best_key is None or key > best_key:
                best_key = key
                best = TimedSequence(chain.events, v.constraints, chain.windows, False, losses,
                                     {"response_time": str(dur), "rounds": _rounds(chain)})
    if best is None:
        raise GoalError("no feasible response sequence")
    best.meta["rejected"] = rejected
    return best


def _multi_responder(table, n, budget, assignment, designated, epsilon, assume) -> TimedSequence:
    from .constraints import best_overhead_system  # constraints builds on this module

    if designated is None:
        if assignment is not None:
            designated = min(range(1, n + 1), key=lambda j: TimeExpr.make(
                {delay(REQUESTER, j): 1, timer(j): 1}).evaluate(assignment))
        else:
            designated = 1
    j = designated
    chains = [c for c in backward_search(_response_goal(table, j), table, n, budget + 1) if _rounds(c) == budget + 1]
    chain = chains[0]
    losses = LossPattern()
    for k in range(1, budget + 1):
        losses = losses | LossPattern.single(j, StimulusKind.RES_TX, k, REQUESTER)
    cons = list(best_overhead_system(n, designated=j).conjuncts) + assume
    # the next request reaches everyone after the previous round has settled
    reach = TimeExpr.make({delay(REQUESTER, j): 1, timer(j): 1})
    for i in range(1, n + 1):
        if i != j:
            cons.append(LinearInequality(reach + TimeExpr.var(delay(j, i)), Rel.LT,
                                         TimeExpr.var(timer(REQUESTER)) + TimeExpr.var(delay(REQUESTER, i)),
                                         f"settle({i})"))
    witness = assignment
    if witness is None:
        sol = solve_feasibility(lp_from_inequalities(cons, epsilon))
        if not sol.ok:
            raise GoalError("multi-responder response-time constraints are infeasible")
        witness = sol.assignment
    v = forward_verify(chain, table, losses, n, witness, epsilon)
    meta = {"response_time": str(chain.duration), "rounds": budget + 1, "designated": j,
            "witness": dict(witness), "accepted": v.accepted,
            "reconstructed": "constraints for non-designated responders follow the best-case suppression pair"}
    if not v.accepted:
        meta["reason"] = v.reason
    return TimedSequence(chain.events, cons, chain.windows, False, losses, meta)
