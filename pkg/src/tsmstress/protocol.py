"""Per-system FSMs, the global FSM and the built-in timer-suppression table.

Systems are plain integers: ``0`` is always the requester Q and ``1..n``
are the potential responders.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

REQUESTER = 0


class ModelError(ValueError):
    """Raised for malformed tables, states or stimuli."""


class StateSymbol(str, Enum):
    R = "R"
    RT = "RT"
    D = "D"
    DT = "DT"


class Role(str, Enum):
    REQUESTER = "Requester"
    RESPONDER = "Responder"


def role_of(system: int) -> Role:
    return Role.REQUESTER if system == REQUESTER else Role.RESPONDER


class StimulusKind(str, Enum):
    LOSS = "Loss"
    REQ_TX = "ReqTx"
    REQ_RX = "ReqRx"
    RES_TX = "ResTx"
    RES_RX = "ResRx"
    RES_TIMER_FIRE = "ResTimerFire"
    REQ_TIMER_FIRE = "ReqTimerFire"

    @property
    def is_reception(self) -> bool:
        return self in (StimulusKind.REQ_RX, StimulusKind.RES_RX)

    @property
    def is_timer_fire(self) -> bool:
        return self in (StimulusKind.RES_TIMER_FIRE, StimulusKind.REQ_TIMER_FIRE)


# Timer-carrying states and the stimulus their expiry produces.
TIMER_FIRE_OF = {
    StateSymbol.RT: StimulusKind.REQ_TIMER_FIRE,
    StateSymbol.DT: StimulusKind.RES_TIMER_FIRE,
}
TIMER_STATE_OF = {v: k for k, v in TIMER_FIRE_OF.items()}

INITIAL_STATE = {Role.REQUESTER: StateSymbol.R, Role.RESPONDER: StateSymbol.D}

_SHORT = {
    StimulusKind.LOSS: "L",
    StimulusKind.REQ_TX: "q_t",
    StimulusKind.REQ_RX: "q_r",
    StimulusKind.RES_TX: "p_t",
    StimulusKind.RES_RX: "p_r",
    StimulusKind.RES_TIMER_FIRE: "Res",
    StimulusKind.REQ_TIMER_FIRE: "Req",
}


def system_name(system: int) -> str:
    return "Q" if system == REQUESTER else str(system)


@dataclass(frozen=True, order=True)
class Stimulus:
    kind: StimulusKind
    actor: int
    sender: Optional[int] = None

    def __post_init__(self):
        if self.actor < 0:
            raise ModelError(f"negative system id {self.actor}")
        if self.kind.is_reception:
            if self.sender is None:
                raise ModelError(f"{self.kind.value} needs a sender")
            if self.sender == self.actor:
                raise ModelError("a system cannot receive its own message")
        elif self.sender is not None:
            raise ModelError(f"{self.kind.value} takes no sender")

    def __str__(self) -> str:
        s = f"{self.kind.value}@{system_name(self.actor)}"
        if self.sender is not None:
            s += f"<-{system_name(self.sender)}"
        return s

    @property
    def short(self) -> str:
        return _SHORT[self.kind]


@dataclass(frozen=True)
class Transition:
    """One row of a transition table.

    ``start`` and ``end`` are parallel tuples: a row may rewrite several
    alternative start states (``rcv_res`` suppresses both RT and DT holders).
    Pure-emission rows have both empty.
    """

    symbol: str
    trigger: StimulusKind
    start: tuple[StateSymbol, ...] = ()
    end: tuple[StateSymbol, ...] = ()
    emits: tuple[StimulusKind, ...] = ()

    def __post_init__(self):
        if len(self.start) != len(self.end):
            raise ModelError(f"row {self.symbol}: start/end length mismatch")
        if len(set(self.start)) != len(self.start):
            raise ModelError(f"row {self.symbol}: repeated start state")

    @property
    def changes_state(self) -> bool:
        return bool(self.start)

    def applies_to(self, state: StateSymbol) -> bool:
        return not self.start or state in self.start

    def end_for(self, state: StateSymbol) -> StateSymbol:
        if not self.start:
            return state
        return self.end[self.start.index(state)]

    def to_dict(self) -> dict:
        return {
            "symbol": self.symbol,
            "trigger": self.trigger.value,
            "start": [s.value for s in self.start],
            "end": [s.value for s in self.end],
            "emits": [k.value for k in self.emits],
        }

    @classmethod
    def from_dict(cls, row: dict) -> "Transition":
        try:
            return cls(
                symbol=row["symbol"],
                trigger=StimulusKind(row["trigger"]),
                start=tuple(StateSymbol(s) for s in row.get("start", [])),
                end=tuple(StateSymbol(s) for s in row.get("end", [])),
                emits=tuple(StimulusKind(k) for k in row.get("emits", [])),
            )
        except (KeyError, ValueError) as exc:
            raise ModelError(f"bad transition row {row!r}: {exc}") from exc


@dataclass(frozen=True)
class TransitionTable:
    rows: tuple[Transition, ...]

    def __post_init__(self):
        symbols = [r.symbol for r in self.rows]
        if len(set(symbols)) != len(symbols):
            raise ModelError("duplicate row symbols")
        seen: dict[tuple, str] = {}
        for r in self.rows:
            keys = [(r.trigger, s) for s in r.start] or [(r.trigger, None)]
            for key in keys:
                # a stateless row matches every state, so it clashes with anything
                clash = [k for k in seen if k[0] == r.trigger and (k[1] is None or key[1] is None or k[1] == key[1])]
                if clash:
                    raise ModelError(f"rows {seen[clash[0]]} and {r.symbol} overlap on {key}")
            for key in keys:
                seen[key] = r.symbol

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def row(self, symbol: str) -> Transition:
        for r in self.rows:
            if r.symbol == symbol:
                return r
        raise KeyError(symbol)

    def match(self, kind: StimulusKind, state: StateSymbol) -> Optional[Transition]:
        for r in self.rows:
            if r.trigger == kind and r.applies_to(state):
                return r
        return None

    def emitters(self, kind: StimulusKind) -> list[Transition]:
        return [r for r in self.rows if kind in r.emits]

    def creators(self, state: StateSymbol) -> list[Transition]:
        """Rows whose effect leaves a system in ``state`` from a different state."""
        return [r for r in self.rows if any(e == state and s != state for s, e in zip(r.start, r.end))]

    def to_json(self) -> str:
        return json.dumps({"rows": [r.to_dict() for r in self.rows]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TransitionTable":
        data = json.loads(text)
        return cls(tuple(Transition.from_dict(r) for r in data["rows"]))


def tsm_table() -> TransitionTable:
    """The seven-row timer suppression table."""
    S, K = StateSymbol, StimulusKind
    return TransitionTable((
        Transition("loss", K.LOSS, (S.R,), (S.RT,), (K.REQ_TX,)),
        Transition("tx_req", K.REQ_TX, emits=(K.REQ_RX,)),
        Transition("rcv_req", K.REQ_RX, (S.D,), (S.DT,)),
        Transition("res_tmr", K.RES_TIMER_FIRE, (S.DT,), (S.D,), (K.RES_TX,)),
        Transition("tx_res", K.RES_TX, emits=(K.RES_RX,)),
        Transition("rcv_res", K.RES_RX, (S.RT, S.DT), (S.R, S.D)),
        Transition("req_tmr", K.REQ_TIMER_FIRE, emits=(K.REQ_TX,)),
    ))


TSM = tsm_table()


@dataclass(frozen=True)
class InFlight:
    kind: StimulusKind
    receiver: int
    sender: int
    sent_at: float = 0.0


@dataclass(frozen=True)
class GlobalState:
    per_system: tuple[StateSymbol, ...]
    in_flight: frozenset = field(default_factory=frozenset)

    @property
    def n_responders(self) -> int:
        return len(self.per_system) - 1

    def __getitem__(self, system: int) -> StateSymbol:
        try:
            return self.per_system[system]
        except IndexError:
            raise ModelError(f"unknown system {system}") from None

    def with_state(self, system: int, state: StateSymbol) -> "GlobalState":
        ps = list(self.per_system)
        ps[system] = state
        return GlobalState(tuple(ps), self.in_flight)

    def as_dict(self) -> dict[str, str]:
        return {system_name(i): s.value for i, s in enumerate(self.per_system)}

    def __str__(self) -> str:
        return "{" + ", ".join(f"{k}:{v}" for k, v in self.as_dict().items()) + "}"


def initial_global_state(n: int) -> GlobalState:
    if n < 1:
        raise ModelError("need at least one responder")
    return GlobalState((StateSymbol.R,) + (StateSymbol.D,) * n)


def global_state(states: dict[int, str] | Sequence[str]) -> GlobalState:
    """Build a state from ``{0: "R", 1: "D"}`` or ``["R", "D"]``."""
    if isinstance(states, dict):
        states = [states[i] for i in range(len(states))]
    return GlobalState(tuple(StateSymbol(s) for s in states))


def multicast(kind: StimulusKind, sender: int, systems: Iterable[int]) -> list[Stimulus]:
    return [Stimulus(kind, r, sender) for r in systems if r != sender]


def apply(table: TransitionTable, g: GlobalState, s: Stimulus, now: float = 0.0
          ) -> tuple[GlobalState, list[Stimulus]]:
    """Global transition function: one stimulus, one successor.

    Stimuli with no matching row are absorbed. Reception emissions are
    expanded to one stimulus per other system (multicast) and recorded as
    in flight; a consumed reception leaves the in-flight set.
    """
    current = g[s.actor]
    if s.sender is not None and not 0 <= s.sender < len(g.per_system):
        raise ModelError(f"unknown sender {s.sender}")
    in_flight = g.in_flight
    if s.kind.is_reception:
        in_flight = frozenset(m for m in in_flight
                              if not (m.kind == s.kind and m.receiver == s.actor and m.sender == s.sender))
    row = table.match(s.kind, current)
    if row is None:
        return GlobalState(g.per_system, in_flight), []
    nxt = GlobalState(g.per_system, in_flight).with_state(s.actor, row.end_for(current))
    emitted: list[Stimulus] = []
    for kind in row.emits:
        if kind.is_reception:
            emitted.extend(multicast(kind, s.actor, range(len(g.per_system))))
        else:
            emitted.append(Stimulus(kind, s.actor))
    new_msgs = {InFlight(m.kind, m.actor, m.sender, now) for m in emitted if m.kind.is_reception}
    if new_msgs:
        nxt = GlobalState(nxt.per_system, nxt.in_flight | new_msgs)
    return nxt, emitted


def reachable_states(table: TransitionTable, role: Role) -> frozenset[StateSymbol]:
    """States a single system of ``role`` can reach through the table."""
    seen = {INITIAL_STATE[role]}
    frontier = list(seen)
    while frontier:
        st = frontier.pop()
        for r in table:
            if st in r.start:
                nxt = r.end_for(st)
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
    return frozenset(seen)
