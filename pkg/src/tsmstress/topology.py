"""Virtual LAN model: delay matrix, intervals, timer strategies and selective loss."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

import numpy as np

from .protocol import REQUESTER, ModelError, StimulusKind


class DomainError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise DomainError(f"invalid interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @classmethod
    def of(cls, value) -> "Interval":
        if isinstance(value, Interval):
            return value
        if isinstance(value, (int, float)):
            return cls.point(float(value))
        lo, hi = value
        return cls(float(lo), float(hi))

    @property
    def is_scalar(self) -> bool:
        return self.lo == self.hi

    @property
    def mid(self) -> float:
        return (self.lo + self.hi) / 2

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __add__(self, other):
        other = Interval.of(other)
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other):
        other = Interval.of(other)
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def scale(self, k: float) -> "Interval":
        a, b = self.lo * k, self.hi * k
        return Interval(min(a, b), max(a, b))

    def intersects(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def to_list(self) -> list[float]:
        return [self.lo, self.hi]

    def __str__(self) -> str:
        return f"[{self.lo:g},{self.hi:g}]"


class Relation(str, Enum):
    LT = "LT"
    EQ = "EQ"
    GT = "GT"


def interval_cmp_branches(a: Interval, b: Interval) -> frozenset[Relation]:
    """Relations between ``a`` and ``b`` that some choice of values satisfies.

    GT needs a value of ``a`` strictly above a value of ``b``; a single
    shared endpoint only supports EQ.
    """
    rel = set()
    if a.lo < b.hi:
        rel.add(Relation.LT)
    if a.intersects(b):
        rel.add(Relation.EQ)
    if a.hi > b.lo:
        rel.add(Relation.GT)
    return frozenset(rel)


def backward_offset_interval(exp_q: Interval) -> Interval:
    """Residual of a timer started at an unknown offset: ``Exp - x`` with ``x`` in ``[0, hi]``."""
    return Interval(0.0, exp_q.hi)


class DelayMatrix:
    """End-to-end one-way delays in ms; ``d[i][j]`` is from ``i`` to ``j``.

    System 0 is the requester. Asymmetry is allowed.
    """

    def __init__(self, d):
        arr = np.array(d, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 2:
            raise DomainError(f"delay matrix must be square with n >= 2, got {arr.shape}")
        if np.any(np.diag(arr) != 0):
            raise DomainError("diagonal delays must be zero")
        off = arr[~np.eye(arr.shape[0], dtype=bool)]
        if not np.all(np.isfinite(off)) or np.any(off <= 0):
            raise DomainError("off-diagonal delays must be positive and finite")
        arr.setflags(write=False)
        self._d = arr

    @property
    def n(self) -> int:
        return self._d.shape[0]

    @property
    def responders(self) -> range:
        return range(1, self.n)

    @property
    def array(self) -> np.ndarray:
        return self._d

    def __getitem__(self, ij) -> float:
        i, j = ij
        return float(self._d[i, j])

    def __eq__(self, other) -> bool:
        return isinstance(other, DelayMatrix) and np.array_equal(self._d, other._d)

    def __repr__(self) -> str:
        return f"DelayMatrix(n={self.n})"

    def tolist(self) -> list[list[float]]:
        return self._d.tolist()

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["from\\to"] + list(range(self.n)))
        for i in range(self.n):
            w.writerow([i] + [repr(float(x)) for x in self._d[i]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DelayMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        header = [int(x) for x in rows[0][1:]]
        if header != list(range(len(header))):
            raise DomainError("CSV header must list system ids 0..n-1")
        body = rows[1:len(header) + 1]
        if [int(r[0]) for r in body] != header:
            raise DomainError("CSV row ids must match the header")
        return cls([[float(x) for x in r[1:]] for r in body])

    def edge_list(self) -> list[tuple[int, int, float]]:
        return [(i, j, self[i, j]) for i in range(self.n) for j in range(self.n) if i != j]


def estimated_distance(d: DelayMatrix, i: int, q: int = REQUESTER) -> float:
    if i == q:
        raise DomainError("distance of a system to itself is undefined")
    return (d[i, q] + d[q, i]) / 2


class TimerStrategy(str, Enum):
    FIXED = "fixed"
    DISTANCE = "distance"
    DETERMINISTIC = "deterministic"
    ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class AdaptiveParams:
    """Multiplicative adaptation of the distance-based timer constants.

    After a recovery with more than one response, ``d1`` and ``d2`` grow by
    ``growth`` (capped at ``cap`` times their initial values); otherwise they
    decay back toward the initial values by the same factor.
    """

    d1: float = 1.0
    d2: float = 1.0
    growth: float = 1.5
    cap: float = 2.0
    warmup: int = 8


@dataclass(frozen=True)
class TimerSpec:
    """Response-timer strategy plus the request-timer duration.

    ``c1``/``c2`` are the distance coefficients (DISTANCE), ``D1`` for
    DETERMINISTIC (``c2`` is forced to 0) or the initial constants for
    ADAPTIVE. ``request_timer=None`` lets the synthesis pick one.
    """

    strategy: TimerStrategy
    intervals: Mapping[int, Interval] = field(default_factory=dict)
    default: Optional[Interval] = None
    c1: float = 1.0
    c2: float = 1.0
    request_timer: Optional[Interval] = None
    adaptive: AdaptiveParams = field(default_factory=AdaptiveParams)

    def __post_init__(self):
        if self.strategy == TimerStrategy.DETERMINISTIC:
            object.__setattr__(self, "c2", 0.0)
        if self.c1 <= 0 or self.c2 < 0:
            raise DomainError("timer constants must be positive")
        for iv in list(self.intervals.values()) + ([self.default] if self.default else []):
            if iv.lo <= 0:
                raise DomainError("fixed timer intervals must be positive")
        if self.request_timer is not None and self.request_timer.lo <= 0:
            raise DomainError("request timer must be positive")

    @property
    def depends_on_distance(self) -> bool:
        return self.strategy != TimerStrategy.FIXED

    def coefficients(self) -> tuple[float, float]:
        """(low, high) multipliers of the estimated distance."""
        if self.strategy == TimerStrategy.ADAPTIVE:
            return self.adaptive.d1, self.adaptive.d1 + self.adaptive.d2
        return self.c1, self.c1 + self.c2

    def fixed_interval(self, i: int) -> Interval:
        if i in self.intervals:
            return self.intervals[i]
        if self.default is None:
            raise DomainError(f"no fixed timer interval for responder {i}")
        return self.default

    def response_interval(self, i: int, d: DelayMatrix) -> Interval:
        if self.strategy == TimerStrategy.FIXED:
            return self.fixed_interval(i)
        lo, hi = self.coefficients()
        e = estimated_distance(d, i)
        return Interval(lo * e, hi * e)

    def to_dict(self) -> dict:
        out: dict = {"strategy": self.strategy.value}
        if self.strategy == TimerStrategy.FIXED:
            out["intervals"] = {str(k): v.to_list() for k, v in sorted(self.intervals.items())}
            if self.default is not None:
                out["default"] = self.default.to_list()
        elif self.strategy == TimerStrategy.ADAPTIVE:
            a = self.adaptive
            out["adaptive"] = {"d1": a.d1, "d2": a.d2, "growth": a.growth, "cap": a.cap, "warmup": a.warmup}
        else:
            out["c1"] = self.c1
            out["c2"] = self.c2
        if self.request_timer is not None:
            out["request_timer"] = self.request_timer.to_list()
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "TimerSpec":
        strategy = TimerStrategy(data["strategy"])
        kw: dict = {"strategy": strategy}
        if "intervals" in data:
            kw["intervals"] = {int(k): Interval.of(v) for k, v in data["intervals"].items()}
        if "default" in data:
            kw["default"] = Interval.of(data["default"])
        for key in ("c1", "c2"):
            if key in data:
                kw[key] = float(data[key])
        if "adaptive" in data:
            kw["adaptive"] = AdaptiveParams(**data["adaptive"])
        if data.get("request_timer") is not None:
            kw["request_timer"] = Interval.of(data["request_timer"])
        return cls(**kw)


def wb_timers(source: int = 1, request_timer: Optional[Interval] = None) -> TimerSpec:
    """Whiteboard-style fixed timers: [100,200] ms at the source, [200,400] elsewhere."""
    return TimerSpec(TimerStrategy.FIXED, {source: Interval(100.0, 200.0)},
                     default=Interval(200.0, 400.0), request_timer=request_timer)


def deterministic_timers(d1: float = 1.0, request_timer: Optional[Interval] = None) -> TimerSpec:
    return TimerSpec(TimerStrategy.DETERMINISTIC, c1=d1, c2=0.0, request_timer=request_timer)


def distance_timers(c1: float = 1.0, c2: float = 1.0, request_timer: Optional[Interval] = None) -> TimerSpec:
    return TimerSpec(TimerStrategy.DISTANCE, c1=c1, c2=c2, request_timer=request_timer)


PRESETS = {
    "wb": wb_timers,
    "deterministic": deterministic_timers,
    "distance": distance_timers,
    "adaptive": lambda: TimerSpec(TimerStrategy.ADAPTIVE),
}


@dataclass(frozen=True, order=True)
class MessageId:
    """A transmitted message: sender, transmission kind and per-sender sequence number (from 1)."""

    sender: int
    kind: StimulusKind
    seq: int

    def __post_init__(self):
        if self.kind not in (StimulusKind.REQ_TX, StimulusKind.RES_TX):
            raise ModelError("message ids name transmissions (ReqTx/ResTx)")
        if self.seq < 1:
            raise ModelError("sequence numbers start at 1")


@dataclass(frozen=True)
class LossPattern:
    drops: frozenset = frozenset()  # of (MessageId, receiver)

    def dropped(self, msg: MessageId, receiver: int) -> bool:
        return (msg, receiver) in self.drops

    def __len__(self) -> int:
        return len(self.drops)

    @classmethod
    def single(cls, sender: int, kind: StimulusKind, seq: int, receiver: int) -> "LossPattern":
        return cls(frozenset({(MessageId(sender, kind, seq), receiver)}))

    def __or__(self, other: "LossPattern") -> "LossPattern":
        return LossPattern(self.drops | other.drops)

    def to_list(self) -> list[dict]:
        return [{"sender": m.sender, "kind": m.kind.value, "seq": m.seq, "receiver": r}
                for m, r in sorted(self.drops)]

    @classmethod
    def from_list(cls, items) -> "LossPattern":
        return cls(frozenset((MessageId(int(x["sender"]), StimulusKind(x["kind"]), int(x["seq"])), int(x["receiver"]))
                             for x in items))


def random_topology(n: int, seed: int, delay_range: Interval = Interval(5.0, 50.0)) -> DelayMatrix:
    """Flat random VLAN with ``n`` systems and i.i.d. uniform one-way delays."""
    if n < 2:
        raise DomainError("a topology needs at least two systems")
    if delay_range.lo <= 0:
        raise DomainError("delays must be positive")
    rng = np.random.default_rng(seed)
    d = rng.uniform(delay_range.lo, delay_range.hi, size=(n, n))
    np.fill_diagonal(d, 0.0)
    return DelayMatrix(d)
