"""Linear time expressions over delays and timer durations, and inequalities between them."""
from __future__ import annotations

import re
from functools import cached_property
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

from .protocol import StimulusKind

Var = tuple  # ("d", i, j) or ("Exp", i)
Number = Union[int, float]


def delay(i: int, j: int) -> Var:
    return ("d", i, j)


def timer(i: int) -> Var:
    return ("Exp", i)


def var_name(v: Var) -> str:
    if v[0] == "d":
        return f"d({v[1]},{v[2]})"
    return f"Exp({v[1]})"


_TOKEN_RE = re.compile(r"t0|d\(\d+,\d+\)|Exp\(\d+\)|\d+(?:\.\d*)?(?:e[+-]?\d+)?|[+*-]")
_VAR_RE = re.compile(r"^(d)\((\d+),(\d+)\)$|^(Exp)\((\d+)\)$")


def parse_var(name: str) -> Var:
    m = _VAR_RE.match(name.replace(" ", ""))
    if not m:
        raise ValueError(f"not a variable name: {name!r}")
    if m.group(1):
        return ("d", int(m.group(2)), int(m.group(3)))
    return ("Exp", int(m.group(5)))


def _clean(x: Number) -> Number:
    if isinstance(x, float) and x.is_integer():
        return int(x)
    return x


@dataclass(frozen=True)
class TimeExpr:
    """``origin * t0 + constant + sum(coef * var)``.

    All event times are offsets from ``t0``, the first request transmission.
    """

    terms: tuple = ()  # sorted ((var, coef), ...), no zero coefficients
    constant: Number = 0
    origin: int = 0

    @classmethod
    def make(cls, terms: Mapping[Var, Number] | Iterable = (), constant: Number = 0, origin: int = 0) -> "TimeExpr":
        acc: dict[Var, Number] = {}
        items = terms.items() if hasattr(terms, "items") else terms
        for v, c in items:
            acc[v] = acc.get(v, 0) + c
        return cls._from_acc(acc, constant, origin)

    @classmethod
    def _from_acc(cls, acc: dict, constant: Number, origin: int) -> "TimeExpr":
        clean = []
        for v, c in acc.items():
            if c:
                clean.append((v, int(c) if c.__class__ is float and c.is_integer() else c))
        clean.sort()
        return cls(tuple(clean), _clean(constant), origin)

    def _combine(self, other: "TimeExpr", sign: int) -> "TimeExpr":
        acc = dict(self.terms)
        for v, c in other.terms:
            acc[v] = acc.get(v, 0) + sign * c
        return TimeExpr._from_acc(acc, self.constant + sign * other.constant, self.origin + sign * other.origin)

    @classmethod
    def var(cls, v: Var, coef: Number = 1) -> "TimeExpr":
        return cls.make({v: coef})

    @classmethod
    def t0(cls) -> "TimeExpr":
        return cls(origin=1)

    @property
    def coeffs(self) -> dict[Var, Number]:
        return dict(self.terms)

    @property
    def variables(self) -> set:
        return {v for v, _ in self.terms}

    def __add__(self, other) -> "TimeExpr":
        if isinstance(other, (int, float)):
            return TimeExpr(self.terms, _clean(self.constant + other), self.origin)
        return self._combine(other, 1)

    __radd__ = __add__

    def __neg__(self) -> "TimeExpr":
        return TimeExpr(tuple((v, -c) for v, c in self.terms), -self.constant, -self.origin)

    def __sub__(self, other) -> "TimeExpr":
        if isinstance(other, (int, float)):
            return self + (-other)
        return self._combine(other, -1)

    def scale(self, k: Number) -> "TimeExpr":
        return TimeExpr.make({v: c * k for v, c in self.terms}, self.constant * k, self.origin)

    def relabel(self, ids: Mapping[int, int]) -> "TimeExpr":
        """Rename system indices; ``ids`` must be one-to-one on the indices present."""
        get = ids.get
        terms = []
        for v, c in self.terms:
            if len(v) == 3:
                terms.append(((v[0], get(v[1], v[1]), get(v[2], v[2])), c))
            else:
                terms.append(((v[0], get(v[1], v[1])), c))
        terms.sort()
        return TimeExpr(tuple(terms), self.constant, self.origin)

    def is_zero(self) -> bool:
        return not self.terms and self.constant == 0 and self.origin == 0

    def evaluate(self, assignment: Mapping, t0: float = 0.0) -> float:
        total = float(self.constant) + self.origin * t0
        for v, c in self.terms:
            val = assignment[v] if v in assignment else assignment[var_name(v)]
            total += c * val
        return total

    def substitute(self, mapping: Mapping[Var, "TimeExpr | Number"]) -> "TimeExpr":
        terms: list = []
        const, origin = self.constant, self.origin
        for v, c in self.terms:
            if v not in mapping:
                terms.append((v, c))
                continue
            rep = mapping[v]
            if isinstance(rep, TimeExpr):
                terms.extend((w, c * k) for w, k in rep.terms)
                const += c * rep.constant
                origin += c * rep.origin
            else:
                const += c * rep
        return TimeExpr.make(terms, const, origin)

    def sign(self) -> int:
        """+1/-1 if provably positive/negative for positive variables, 0 if zero, None if unknown."""
        if self.origin:
            return None
        cs = [c for _, c in self.terms] + [self.constant]
        if all(c == 0 for c in cs):
            return 0
        if all(c >= 0 for c in cs):
            return 1
        if all(c <= 0 for c in cs):
            return -1
        return None

    def __str__(self) -> str:
        parts = []
        if self.origin:
            parts.append("t0" if self.origin == 1 else f"{self.origin}*t0")
        for v, c in self.terms:
            name = var_name(v)
            if c == 1:
                parts.append(f"+ {name}")
            elif c == -1:
                parts.append(f"- {name}")
            else:
                parts.append(f"{'+' if c > 0 else '-'} {abs(c):g}*{name}")
        if self.constant or not parts:
            c = self.constant
            parts.append(f"{'+' if c >= 0 else '-'} {abs(c):g}")
        s = " ".join(parts)
        if s.startswith("+ "):
            s = s[2:]
        elif s.startswith("- "):
            s = "-" + s[2:]
        return s

    @classmethod
    def parse(cls, text: str) -> "TimeExpr":
        tokens = _TOKEN_RE.findall(text.replace(" ", ""))
        terms, const, origin, sign = {}, 0.0, 0, 1
        i = 0
        while i < len(tokens):
            tok = tokens[i]
            if tok in "+-":
                sign = 1 if tok == "+" else -1
                i += 1
                continue
            coef = 1.0
            if i + 2 < len(tokens) and tokens[i + 1] == "*":
                coef = float(tok)
                tok = tokens[i + 2]
                i += 2
            if tok == "t0":
                origin += int(sign * coef)
            elif tok[0].isdigit() or tok[0] == ".":
                const += sign * float(tok)
            else:
                v = parse_var(tok)
                terms[v] = terms.get(v, 0) + sign * coef
            sign = 1
            i += 1
        return cls.make(terms, const, origin)


class Rel(str, Enum):
    LT = "<"
    LE = "<="


@dataclass(frozen=True)
class LinearInequality:
    """``lhs rel rhs`` between two event times.

    ``events`` optionally names the (earlier, later) event kinds so the
    inequality can be read as an event ordering with simulator tie-breaking.
    """

    lhs: TimeExpr
    rel: Rel
    rhs: TimeExpr
    tag: str = ""
    events: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        if self.lhs.origin != self.rhs.origin:
            raise ValueError(f"t0 does not cancel in {self}")

    @cached_property
    def diff(self) -> TimeExpr:
        """``lhs - rhs``, free of t0."""
        return self.lhs - self.rhs

    @property
    def variables(self) -> set:
        return self.lhs.variables | self.rhs.variables

    def holds(self, assignment: Mapping, tol: float = 0.0) -> bool:
        v = self.diff.evaluate(assignment)
        return v < -tol if self.rel == Rel.LT else v <= tol

    def status(self) -> Optional[bool]:
        """True if implied by positivity of all variables, False if contradicted, None otherwise."""
        s = self.diff.sign()
        if s == -1:
            return True
        if s == 0:
            return self.rel == Rel.LE
        if s == 1:
            return False
        return None

    def margined(self, epsilon: float) -> "LinearInequality":
        if self.rel == Rel.LE:
            return self
        return LinearInequality(self.lhs, Rel.LE, self.rhs - epsilon, self.tag, self.events)

    def relabel(self, ids: Mapping[int, int], tag: str) -> "LinearInequality":
        return LinearInequality(self.lhs.relabel(ids), self.rel, self.rhs.relabel(ids), tag, self.events)

    def substitute(self, mapping) -> "LinearInequality":
        return LinearInequality(self.lhs.substitute(mapping), self.rel, self.rhs.substitute(mapping), self.tag,
                                self.events)

    def __str__(self) -> str:
        return f"{self.lhs} {self.rel.value} {self.rhs}"

    def to_dict(self) -> dict:
        out = {"lhs": str(self.lhs), "rel": self.rel.value, "rhs": str(self.rhs), "tag": self.tag}
        if self.events:
            out["events"] = [k.value for k in self.events]
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "LinearInequality":
        events = tuple(StimulusKind(k) for k in data["events"]) if data.get("events") else None
        return cls(TimeExpr.parse(data["lhs"]), Rel(data["rel"]), TimeExpr.parse(data["rhs"]), data.get("tag", ""),
                   events)
