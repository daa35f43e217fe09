"""Concrete test scenarios and their JSON form."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

from .topology import DelayMatrix, DomainError, LossPattern, TimerSpec, TimerStrategy

SCHEMA = "tsm-stress/scenario/1"


class Objective(str, Enum):
    WORST_OVERHEAD = "worst-overhead"
    BEST_OVERHEAD = "best-overhead"
    MAX_RESPONSE_TIME = "max-response-time"


class Task(str, Enum):
    TOPOLOGY = "topology-synthesis"
    TIMERS = "timer-configuration"


@dataclass(frozen=True)
class Predicted:
    response_count: int
    response_time: Optional[float] = None


@dataclass
class Scenario:
    """Delay matrix, timers and losses, plus what the analysis predicts.

    ``response_timers`` holds the resolved per-responder timer values the
    scenario was solved for; ``timers`` keeps the strategy so random draws
    can be simulated too.
    """

    d: DelayMatrix
    timers: TimerSpec
    request_timer: float
    response_timers: dict[int, float] = field(default_factory=dict)
    losses: LossPattern = field(default_factory=LossPattern)
    predicted: Predicted = field(default_factory=lambda: Predicted(1))
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.n
        if not 1 <= self.predicted.response_count <= n:
            raise DomainError(f"predicted response count {self.predicted.response_count} outside [1, {n}]")
        if self.request_timer <= 0:
            raise DomainError("request timer must be positive")
        for i, v in self.response_timers.items():
            if not 1 <= i <= n or v <= 0:
                raise DomainError(f"bad response timer {i}: {v}")

    @property
    def n(self) -> int:
        """Number of responders."""
        return self.d.n - 1

    def timer_values(self) -> dict[int, float]:
        """Per-responder timer values, computing deterministic ones from distances when unset."""
        if self.response_timers:
            return dict(self.response_timers)
        if self.timers.strategy == TimerStrategy.DETERMINISTIC:
            from .topology import estimated_distance
            return {i: self.timers.c1 * estimated_distance(self.d, i) for i in self.d.responders}
        raise DomainError("scenario has no resolved response timers")

    def to_dict(self, matrix_ref: Optional[str] = None) -> dict:
        out = {
            "schema": SCHEMA,
            "n": self.n,
            "timers": {
                "spec": self.timers.to_dict(),
                "request": self.request_timer,
                "response": {str(k): v for k, v in sorted(self.response_timers.items())},
            },
            "losses": self.losses.to_list(),
            "predicted": {"responseCount": self.predicted.response_count,
                          "responseTime": self.predicted.response_time},
            "provenance": self.provenance,
        }
        if matrix_ref is not None:
            out["delays"] = {"csv": matrix_ref}
        else:
            out["delays"] = {"matrix": self.d.tolist()}
        return out

    def to_json(self, matrix_ref: Optional[str] = None) -> str:
        return json.dumps(self.to_dict(matrix_ref), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping, base_dir: str = ".") -> "Scenario":
        if data.get("schema") != SCHEMA:
            raise DomainError(f"unsupported scenario schema {data.get('schema')!r}")
        delays = data["delays"]
        if "matrix" in delays:
            d = DelayMatrix(delays["matrix"])
        else:
            with open(os.path.join(base_dir, delays["csv"])) as fh:
                d = DelayMatrix.from_csv(fh.read())
        t = data["timers"]
        pred = data.get("predicted", {})
        return cls(d, TimerSpec.from_dict(t["spec"]), float(t["request"]),
                   {int(k): float(v) for k, v in t.get("response", {}).items()},
                   LossPattern.from_list(data.get("losses", [])),
                   Predicted(int(pred.get("responseCount", 1)), pred.get("responseTime")),
                   dict(data.get("provenance", {})))

    def save(self, path: str, csv: bool = True) -> None:
        """Write ``path`` (JSON) and, with ``csv``, the matrix next to it."""
        ref = None
        if csv:
            stem = os.path.splitext(path)[0]
            ref = os.path.basename(stem) + ".csv"
            with open(stem + ".csv", "w") as fh:
                fh.write(self.d.to_csv())
        with open(path, "w") as fh:
            fh.write(self.to_json(ref) + "\n")

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), os.path.dirname(os.path.abspath(path)))
