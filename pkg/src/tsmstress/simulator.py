"""Discrete-event execution of the timer suppression table over a concrete scenario.

The queue key is ``(time, priority, actor, seq)``: timer fires (priority 0)
run before deliveries (priority 1) at the same instant, and ``seq`` is the
insertion counter, so runs are fully deterministic given the seed.
"""
from __future__ import annotations

import heapq
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .protocol import (REQUESTER, TIMER_FIRE_OF, TSM, StateSymbol, Stimulus, StimulusKind,
                       TransitionTable, system_name)
from .scenario import Scenario
from .topology import (DomainError, MessageId, TimerSpec, TimerStrategy, estimated_distance,
                       wb_timers)

TIMER_PRIORITY = 0
DELIVERY_PRIORITY = 1
DEFAULT_MAX_TIME = 1e7


class DrawKind(str, Enum):
    SCENARIO = "scenario"
    DETERMINISTIC = "deterministic"
    FIXED_RANDOM = "fixed"
    DISTANCE = "distance"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class TimerDraw:
    """How response timers get their values; random kinds need a seed."""

    kind: DrawKind = DrawKind.SCENARIO
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind in (DrawKind.FIXED_RANDOM, DrawKind.DISTANCE, DrawKind.ADAPTIVE) and self.seed is None:
            raise DomainError(f"{self.kind.value} timers need a seed")

    @classmethod
    def parse(cls, kind: str, seed: Optional[int] = None) -> "TimerDraw":
        return cls(DrawKind(kind), seed)


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    priority: int
    actor: int
    seq: int
    stimulus: Stimulus = field(compare=False)
    token: int = field(default=0, compare=False)  # timer generation, stale fires are dropped


@dataclass(frozen=True)
class TraceEntry:
    time: float
    stimulus: Stimulus
    before: StateSymbol
    after: StateSymbol

    def __str__(self) -> str:
        return (f"t={self.time:g} {system_name(self.stimulus.actor)} {self.stimulus} "
                f"{self.before.value}->{self.after.value}")

    def to_dict(self) -> dict:
        return {"t": self.time, "actor": self.stimulus.actor, "stimulus": str(self.stimulus),
                "before": self.before.value, "after": self.after.value}


@dataclass
class SimResult:
    n: int
    responses_sent: int
    suppressions: int
    recovery_time: Optional[float]
    rounds: int
    dt_entries: int
    responders_fired: frozenset
    quiescent: bool
    final_states: tuple
    trace: list = field(default_factory=list)
    draw: str = DrawKind.SCENARIO.value
    seed: Optional[int] = None

    def trace_text(self) -> str:
        return "\n".join(str(e) for e in self.trace) + ("\n" if self.trace else "")

    def trace_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.trace], indent=1)

    def csv_row(self) -> list:
        """``n`` here counts nodes including the requester, so a full stress run shows n-1 responses."""
        rt = "" if self.recovery_time is None else repr(self.recovery_time)
        return [self.n + 1, self.draw, self.responses_sent, self.suppressions, rt]


class _Timers:
    """Produces response-timer durations for one run."""

    def __init__(self, scenario: Scenario, draw: TimerDraw, rng: np.random.Generator,
                 adaptive: Optional[tuple[float, float]] = None):
        self.sc, self.kind, self.rng = scenario, draw.kind, rng
        self.adaptive = adaptive
        spec = scenario.timers
        if self.kind == DrawKind.FIXED_RANDOM and spec.strategy != TimerStrategy.FIXED:
            spec = wb_timers()
        if self.kind == DrawKind.DISTANCE and spec.strategy != TimerStrategy.DISTANCE:
            spec = TimerSpec(TimerStrategy.DISTANCE)
        self.spec = spec
        self.values = scenario.timer_values() if self.kind == DrawKind.SCENARIO else None
        self.e = {i: estimated_distance(scenario.d, i) for i in scenario.d.responders}

    def draw(self, i: int) -> float:
        k = self.kind
        if k == DrawKind.SCENARIO:
            return self.values[i]
        if k == DrawKind.DETERMINISTIC:
            d1 = self.sc.timers.c1 if self.sc.timers.strategy == TimerStrategy.DETERMINISTIC else 1.0
            return d1 * self.e[i]
        if k == DrawKind.FIXED_RANDOM:
            iv = self.spec.fixed_interval(i)
            return float(self.rng.uniform(iv.lo, iv.hi))
        if k == DrawKind.DISTANCE:
            lo, hi = self.spec.coefficients()
        else:
            d1, d2 = self.adaptive
            lo, hi = d1, d1 + d2
        return float(self.rng.uniform(lo * self.e[i], hi * self.e[i]))


def _simulate(scenario: Scenario, timers: _Timers, table: TransitionTable, max_time: float,
              hold_down: float, keep_trace: bool) -> SimResult:
    n = scenario.n
    d = scenario.d.array.tolist()
    losses = scenario.losses
    state = [StateSymbol.R] + [StateSymbol.D] * n
    heap: list[SimEvent] = []
    counter = 0
    generation: dict[tuple[int, StimulusKind], int] = {}
    msg_seq: dict[tuple[int, StimulusKind], int] = {}
    last_response = [-math.inf] * (n + 1)
    trace: list[TraceEntry] = []
    stats = {"responses": 0, "suppressions": 0, "dt": 0, "rounds": 0}
    fired: set[int] = set()
    recovery: Optional[float] = None

    def push(time, prio, stim, token=0):
        nonlocal counter
        counter += 1
        heapq.heappush(heap, SimEvent(time, prio, stim.actor, counter, stim, token))

    def arm(actor, st, now):
        fire = TIMER_FIRE_OF[st]
        key = (actor, fire)
        generation[key] = generation.get(key, 0) + 1
        dur = scenario.request_timer if actor == REQUESTER else timers.draw(actor)
        push(now + dur, TIMER_PRIORITY, Stimulus(fire, actor), generation[key])

    def cancel(actor, st):
        key = (actor, TIMER_FIRE_OF[st])
        generation[key] = generation.get(key, 0) + 1

    def transmit(kind, sender, now):
        key = (sender, kind)
        msg_seq[key] = msg_seq.get(key, 0) + 1
        msg = MessageId(sender, kind, msg_seq[key])
        rx = StimulusKind.REQ_RX if kind == StimulusKind.REQ_TX else StimulusKind.RES_RX
        for r in range(n + 1):
            if r != sender and not losses.dropped(msg, r):
                push(now + d[sender][r], DELIVERY_PRIORITY, Stimulus(rx, r, sender))

    def process(stim: Stimulus, now: float):
        nonlocal recovery
        a = stim.actor
        before = state[a]
        if (stim.kind == StimulusKind.REQ_RX and a != REQUESTER
                and now < last_response[a] + hold_down):
            row = None
        else:
            row = table.match(stim.kind, before)
        after = row.end_for(before) if row is not None else before
        if keep_trace:
            trace.append(TraceEntry(now, stim, before, after))
        if row is None:
            return
        state[a] = after
        if before in TIMER_FIRE_OF and after != before:
            if not stim.kind.is_timer_fire:
                cancel(a, before)
            if before == StateSymbol.DT and stim.kind == StimulusKind.RES_RX:
                stats["suppressions"] += 1
            if a == REQUESTER and stim.kind == StimulusKind.RES_RX and recovery is None:
                recovery = now
        if after in TIMER_FIRE_OF and (after != before or stim.kind == TIMER_FIRE_OF[after]):
            if after == StateSymbol.DT:
                stats["dt"] += 1
            arm(a, after, now)
        if stim.kind == StimulusKind.RES_TIMER_FIRE:
            stats["responses"] += 1
            fired.add(a)
            last_response[a] = now
        for kind in row.emits:
            if kind.is_reception:
                continue
            if kind in (StimulusKind.REQ_TX, StimulusKind.RES_TX):
                if kind == StimulusKind.REQ_TX and a == REQUESTER:
                    stats["rounds"] += 1
                if keep_trace:
                    trace.append(TraceEntry(now, Stimulus(kind, a), state[a], state[a]))
                transmit(kind, a, now)
            else:
                process(Stimulus(kind, a), now)

    process(Stimulus(StimulusKind.LOSS, REQUESTER), 0.0)
    quiescent = True
    while heap:
        ev = heapq.heappop(heap)
        if ev.time > max_time:
            quiescent = False
            break
        stim = ev.stimulus
        if stim.kind.is_timer_fire and generation.get((stim.actor, stim.kind)) != ev.token:
            continue
        process(stim, ev.time)
    return SimResult(n, stats["responses"], stats["suppressions"], recovery, stats["rounds"],
                     stats["dt"], frozenset(fired), quiescent, tuple(s.value for s in state), trace)


def run(scenario: Scenario, draw: TimerDraw = TimerDraw(), max_time: float = DEFAULT_MAX_TIME,
        hold_down: float = 0.0, table: TransitionTable = TSM, trace: bool = True) -> SimResult:
    """Simulate Loss@Q at t=0 and drain the queue.

    Adaptive draws run ``warmup`` loss events first, adapting the timer
    constants after each, and report the last event.
    """
    if max_time <= 0:
        raise DomainError("max_time must be positive")
    rng = np.random.default_rng(draw.seed)
    if draw.kind != DrawKind.ADAPTIVE:
        res = _simulate(scenario, _Timers(scenario, draw, rng), table, max_time, hold_down, trace)
    else:
        p = scenario.timers.adaptive
        d1, d2 = p.d1, p.d2
        for k in range(p.warmup + 1):
            last = k == p.warmup
            res = _simulate(scenario, _Timers(scenario, draw, rng, (d1, d2)), table, max_time,
                            hold_down, trace and last)
            if res.responses_sent > 1:
                d1, d2 = min(d1 * p.growth, p.cap * p.d1), min(d2 * p.growth, p.cap * p.d2)
            else:
                d1, d2 = max(d1 / p.growth, p.d1), max(d2 / p.growth, p.d2)
    res.draw, res.seed = draw.kind.value, draw.seed
    return res


@dataclass
class BatchResult:
    runs: list  # of (scenario index, seed, SimResult)

    @property
    def responses(self) -> np.ndarray:
        return np.array([r.responses_sent for _, _, r in self.runs])

    def aggregate(self) -> dict:
        resp = self.responses
        times = [r.recovery_time for _, _, r in self.runs if r.recovery_time is not None]
        return {"runs": len(self.runs), "min_responses": int(resp.min()), "max_responses": int(resp.max()),
                "mean_responses": float(resp.mean()),
                "mean_recovery_time": float(np.mean(times)) if times else None,
                "max_recovery_time": float(np.max(times)) if times else None}

    def to_csv(self) -> str:
        lines = ["scenario,seed,n,strategy,responses,suppressions,recoveryTime"]
        for idx, seed, r in self.runs:
            row = [idx, "" if seed is None else seed] + r.csv_row()
            lines.append(",".join(str(x) for x in row))
        return "\n".join(lines) + "\n"


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("TSM_STRESS_THREADS", "1")))
    except ValueError:
        return 1


def _run_one(args):
    sc, kind, seed, max_time = args
    return run(sc, TimerDraw(kind, seed), max_time, trace=False)


def run_batch(scenarios: Sequence[Scenario], kind: DrawKind | str = DrawKind.DETERMINISTIC,
              seeds: Sequence[Optional[int]] = (None,), max_time: float = DEFAULT_MAX_TIME,
              workers: Optional[int] = None) -> BatchResult:
    """Every scenario under every seed; parallel across runs up to the thread cap."""
    if not scenarios or not seeds:
        raise DomainError("run_batch needs scenarios and seeds")
    kind = DrawKind(kind)
    jobs = [(i, s) for i in range(len(scenarios)) for s in seeds]
    args = [(scenarios[i], kind, s, max_time) for i, s in jobs]
    workers = thread_cap() if workers is None else workers
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, args))
    else:
        results = [_run_one(a) for a in args]
    return BatchResult([(i, s, r) for (i, s), r in zip(jobs, results)])
