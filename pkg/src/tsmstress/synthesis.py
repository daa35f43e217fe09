"""Topology synthesis (timers given, solve for delays) and timer configuration
(delays given, solve for timers)."""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .constraints import (CONSERVATIVE, OPTIMISTIC, ConstraintSystem, best_overhead_system,
                          midpoint_ordering, timer_value, worst_overhead_system)
from .protocol import REQUESTER
from .scenario import Objective, Predicted, Scenario, Task
from .search import max_response_time_search
from .solver import (LpProblem, Status, lp_from_inequalities, max_feasible_subset, pairwise_bounds,
                     solve, solve_symbolic_range)
from .symbolic import LinearInequality, Var, delay, parse_var, timer, var_name
from .topology import (DelayMatrix, DomainError, Interval, LossPattern, TimerSpec, TimerStrategy,
                       deterministic_timers, estimated_distance, wb_timers)

DEFAULT_CEILING = 1000.0
MAX_FLIPS = 16


class InfeasibleError(RuntimeError):
    """No scenario satisfies the request; ``report`` explains why."""

    def __init__(self, message: str, report: Optional[dict] = None):
        super().__init__(message)
        self.report = report or {}


DelayBounds = Union[Interval, Mapping[str, Interval]]


@dataclass
class SynthesisRequest:
    """What to synthesize.

    ``pinned`` maps delay names (``"d(0,1)"``) to fixed values; use
    :func:`parse_pins` for the ``dQ=100`` shorthand.
    """

    task: Task = Task.TOPOLOGY
    objective: Objective = Objective.WORST_OVERHEAD
    n: int = 2
    timers: Optional[TimerSpec] = None
    delays: Optional[DelayBounds] = None
    pinned: dict = field(default_factory=dict)
    epsilon: float = 1.0
    policy: str = CONSERVATIVE
    ordered: bool = False
    designated: Optional[int] = None
    loss_budget: int = 1
    ceiling: float = DEFAULT_CEILING
    upper: float = 10_000.0  # delay cap used by the max-subset fallback

    def __post_init__(self):
        self.task, self.objective = Task(self.task), Objective(self.objective)
        if self.n < 1:
            raise DomainError("need at least one responder")
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")
        if self.task == Task.TOPOLOGY and self.delays is not None:
            raise DomainError("topology synthesis takes timers, not delay bounds")
        if self.task == Task.TIMERS:
            if self.delays is None:
                raise DomainError("timer configuration needs delay bounds")
            if self.objective != Objective.WORST_OVERHEAD:
                raise DomainError("timer configuration supports the worst-overhead objective")
        for name, v in self.pinned.items():
            parse_var(name)
            if v <= 0:
                raise DomainError(f"pinned delay {name} must be positive")

    @property
    def spec(self) -> TimerSpec:
        return self.timers if self.timers is not None else deterministic_timers()


_PIN_RE = re.compile(r"^\s*(dQ|dQout|dQin|d\(\d+,\d+\))\s*=\s*([0-9.eE+-]+)\s*$")


def parse_pins(items, n: int) -> dict[str, float]:
    """``dQ=100`` pins both requester directions for every responder,
    ``dQout``/``dQin`` one direction, ``d(i,j)=v`` a single entry."""
    out: dict[str, float] = {}
    for item in items or ():
        m = _PIN_RE.match(item)
        if not m:
            raise DomainError(f"bad pin {item!r}")
        key, val = m.group(1), float(m.group(2))
        if key.startswith("d("):
            out[var_name(parse_var(key))] = val
            continue
        for i in range(1, n + 1):
            if key in ("dQ", "dQout"):
                out[var_name(delay(REQUESTER, i))] = val
            if key in ("dQ", "dQin"):
                out[var_name(delay(i, REQUESTER))] = val
    return out


def fixed_interval_diff(role_a: str, role_b: str, spec: Optional[TimerSpec] = None) -> Interval:
    """``Exp_a - Exp_b`` for two fixed-timer roles (``src`` or ``other``)."""
    spec = spec or wb_timers(source=1)
    ids = {"src": 1, "other": 2}
    try:
        a, b = spec.fixed_interval(ids[role_a]), spec.fixed_interval(ids[role_b])
    except KeyError:
        raise DomainError(f"roles are 'src' or 'other', got {role_a!r}, {role_b!r}") from None
    return a - b


def all_delays(n: int) -> list[Var]:
    return [delay(i, j) for i in range(n + 1) for j in range(n + 1) if i != j]


def system_id(lp: LpProblem) -> str:
    return hashlib.sha256(lp.to_text().encode()).hexdigest()[:12]


def resolve_timers(spec: TimerSpec, d: DelayMatrix) -> dict[int, float]:
    """Scalar timer per responder: interval midpoints, or D1 times the distance."""
    out = {}
    for i in d.responders:
        if spec.strategy == TimerStrategy.FIXED:
            out[i] = spec.fixed_interval(i).mid
        else:
            lo, hi = spec.coefficients()
            out[i] = (lo + hi) / 2 * estimated_distance(d, i)
    return out


def default_request_timer(spec: TimerSpec, d: DelayMatrix) -> float:
    """Given request timer (midpoint) or twice the slowest request/response round trip."""
    if spec.request_timer is not None:
        return spec.request_timer.mid
    rtt = max(d[REQUESTER, i] + spec.response_interval(i, d).hi + d[i, REQUESTER] for i in d.responders)
    return 2.0 * rtt


def _matrix(n: int, values: Mapping[str, float]) -> DelayMatrix:
    a = np.zeros((n + 1, n + 1))
    for v in all_delays(n):
        a[v[1], v[2]] = values[var_name(v)]
    return DelayMatrix(a)


def _pin_bounds(req: SynthesisRequest) -> dict:
    return {name: (v, v) for name, v in req.pinned.items()}


def _objective(n: int, pinned) -> dict:
    return {var_name(v): 1.0 for v in all_delays(n) if var_name(v) not in pinned}


def _solve_groups(sys: ConstraintSystem, req: SynthesisRequest):
    """Solve with the default group choice, flipping members named in the
    conflict set while that helps. Returns (solution, choice, lp)."""
    choice = [ConstraintSystem.DEFAULT_CHOICE] * len(sys.groups)
    n_conj = len(sys.conjuncts)
    bounds = _pin_bounds(req)
    obj = _objective(req.n, req.pinned)
    extra = all_delays(req.n)
    tried = set()
    sol, lp = None, None
    for _ in range(MAX_FLIPS):
        lp = lp_from_inequalities(sys.choose(choice), req.epsilon, bounds, objective=obj, extra=extra)
        sol = solve(lp)
        if sol.ok or not sol.conflict:
            break
        flip = [r - n_conj for r in sol.conflict if r >= n_conj and (r - n_conj) not in tried]
        if not flip:
            break
        g = flip[0]
        tried.add(g)
        choice[g] = 1 - choice[g]
    return sol, choice, lp


def _subset_prediction(sys: ConstraintSystem, rows: list[LinearInequality], active: set[int],
                       objective: Objective, n: int) -> int:
    """Responders whose every generating row is satisfied are counted as stressed."""
    broken = set()
    for k, q in enumerate(rows):
        if k in active:
            continue
        m = re.search(r"\((\d+),(\d+)\)", q.tag or "")
        if m:
            broken.add(int(m.group(1)))
    if objective == Objective.WORST_OVERHEAD:
        return max(1, n - len(broken))
    return min(n, 1 + len(broken))


def synthesize_topology(req: SynthesisRequest) -> Scenario:
    """Solve the objective's inequality system for a delay matrix."""
    if req.task != Task.TOPOLOGY:
        raise DomainError("synthesize_topology needs a topology-synthesis request")
    if req.objective == Objective.MAX_RESPONSE_TIME:
        return _response_time_scenario(req)
    n, spec = req.n, req.spec
    dq = {i: req.pinned.get(var_name(delay(REQUESTER, i)), 0.0) for i in range(1, n + 1)}
    prov: dict = {"task": req.task.value, "objective": req.objective.value, "policy": req.policy,
                  "epsilon": req.epsilon}
    if req.policy == OPTIMISTIC:
        prov["guaranteed"] = False
    if req.objective == Objective.WORST_OVERHEAD:
        ordering = midpoint_ordering(spec, n, dq) if req.ordered else None
        sys = worst_overhead_system(n, ordering, spec, req.policy)
        if ordering is not None:
            prov["ordering"] = ordering
            prov["assumption"] = "responders fire in midpoint order"
        predicted = n
    else:
        j = req.designated or midpoint_ordering(spec, n, dq)[0]
        sys = best_overhead_system(n, j, spec, req.policy)
        prov["designated"] = j
        predicted = 1
    sol, choice, lp = _solve_groups(sys, req)
    prov["system"] = system_id(lp)
    prov["choice"] = choice
    if sys.infeasible:
        raise InfeasibleError("timer values contradict the objective for every delay matrix",
                              {"contradicted": [str(q) for q in sys.contradicted]})
    if sol.ok:
        prov["status"] = sol.status.value
        values = sol.assignment
    else:
        capped = lp_from_inequalities(sys.choose(choice), req.epsilon, _pin_bounds(req), upper=req.upper,
                                      objective=_objective(n, req.pinned), extra=all_delays(n))
        sub = max_feasible_subset(capped)
        rows = sys.choose(choice)
        active = set(sub.active_rows or [])
        prov.update({"status": Status.MAX_SUBSET.value, "active_rows": sorted(active), "rows": len(rows),
                     "optimal": sub.optimal, "bound_gap": sub.bound_gap,
                     "dropped": [rows[k].tag for k in range(len(rows)) if k not in active]})
        values = sub.assignment
        prov["subset_estimate"] = _subset_prediction(sys, rows, active, req.objective, n)
        predicted = None
    d = _matrix(n, values)
    timers = resolve_timers(spec, d)
    if predicted is None:
        # the subset was solved at conservative timer ends; predict at the resolved values
        predicted = predict_responses(d, timers)
    return Scenario(d, spec, default_request_timer(spec, d), timers, LossPattern(), Predicted(predicted), prov)


def _response_time_scenario(req: SynthesisRequest) -> Scenario:
    n, spec = req.n, req.spec
    seq = max_response_time_search(n=n, loss_budget=req.loss_budget, designated=req.designated,
                                   epsilon=req.epsilon)
    if seq.meta.get("unbounded"):
        raise InfeasibleError("the loss budget can drop every response", dict(seq.meta))
    mapping = {timer(i): timer_value(spec, i, 0.0, OPTIMISTIC) for i in range(1, n + 1)}
    cons = [q.substitute(mapping) for q in seq.constraints_used]
    bounds = _pin_bounds(req)
    if spec.request_timer is not None:
        bounds["Exp(0)"] = (spec.request_timer.mid,) * 2
    obj = {**_objective(n, req.pinned), "Exp(0)": 1.0}
    sol = solve(lp_from_inequalities(cons, req.epsilon, bounds, objective=obj, extra=all_delays(n) + [timer(0)]))
    if not sol.ok:
        raise InfeasibleError("response-time constraints are infeasible", {"status": sol.status.value})
    values = sol.assignment
    if spec.request_timer is None:
        # prefer the usual default request timer when the sequence allows it
        d = _matrix(n, values)
        bounds["Exp(0)"] = (default_request_timer(spec, d),) * 2
        for name in _objective(n, req.pinned):
            bounds[name] = (values[name],) * 2
        lp2 = lp_from_inequalities(cons, req.epsilon, bounds, objective=obj, extra=all_delays(n) + [timer(0)])
        sol2 = solve(lp2)
        if sol2.ok:
            values = sol2.assignment
    d = _matrix(n, values)
    req_timer = values["Exp(0)"]
    timers = resolve_timers(spec, d)
    assign = {parse_var(k): v for k, v in values.items()}
    assign.update({timer(i): v for i, v in timers.items()})
    rt = seq.duration.evaluate(assign)
    prov = {"task": req.task.value, "objective": req.objective.value, "status": sol.status.value,
            "epsilon": req.epsilon, "loss_budget": req.loss_budget, "response_time": str(seq.duration),
            "rounds": seq.meta.get("rounds")}
    for key in ("designated", "reconstructed"):
        if key in seq.meta:
            prov[key] = seq.meta[key]
    predicted = Predicted(1, rt)
    return Scenario(d, spec, req_timer, timers, seq.losses, predicted, prov)


# -- timer configuration ----------------------------------------------------------

def _interval_source(delays: DelayBounds):
    if isinstance(delays, Interval):
        return delays
    return {k if isinstance(k, str) else var_name(k): Interval.of(v) for k, v in delays.items()}


def timer_rules(n: int, delays: DelayBounds) -> dict[tuple[int, int], float]:
    """Tightest ``Exp_i - Exp_j < b`` over pairs, valid for all delays in the bounds."""
    sys = worst_overhead_system(n)
    return pairwise_bounds(solve_symbolic_range(sys.choose(), _interval_source(delays)))


def timer_chain(rules: Mapping[tuple[int, int], float], n: int, ceiling: float, epsilon: float) -> dict[int, float]:
    """Anchor ``Exp_n`` at the ceiling and walk down so every ``i < j`` rule holds by epsilon.

    If every rule already admits equal timers they are all set to the ceiling.
    """
    if all(b > 0 for b in rules.values()):
        return {i: ceiling for i in range(1, n + 1)}
    exp = {n: ceiling}
    for k in range(n - 1, 0, -1):
        exp[k] = min(exp[j] + rules.get((k, j), math.inf) for j in range(k + 1, n + 1)) - epsilon
        if exp[k] <= 0:
            chain = " < ".join(f"Exp({i})" for i in range(k, n + 1))
            raise InfeasibleError(f"timer chain {chain} forces Exp({k}) = {exp[k]:g} <= 0",
                                  {"chain": list(range(k, n + 1)), "value": exp[k]})
    return exp


def predict_responses(d: DelayMatrix, exp: Mapping[int, float]) -> int:
    """Responders that fire in a loss-free single round.

    Responders are taken in firing order; one is suppressed when an earlier
    response reaches it after its request and before its own deadline.
    """
    n = d.n - 1
    order = sorted(range(1, n + 1), key=lambda i: (d[REQUESTER, i] + exp[i], i))
    fired: list[tuple[int, float]] = []
    for i in order:
        req_at, fire_at = d[REQUESTER, i], d[REQUESTER, i] + exp[i]
        # a response arriving together with the request counts as suppressing
        if not any(req_at <= t + d[j, i] < fire_at for j, t in fired):
            fired.append((i, fire_at))
    return len(fired)


def configure_timers(req: SynthesisRequest) -> Scenario:
    """Pairwise timer rules for the delay bounds, then a concrete descending chain.

    The scenario's matrix takes every delay at the midpoint of its bounds.
    """
    if req.task != Task.TIMERS:
        raise DomainError("configure_timers needs a timer-configuration request")
    n = req.n
    rules = timer_rules(n, req.delays)
    exp = timer_chain(rules, n, req.ceiling, req.epsilon)
    src = _interval_source(req.delays)
    vals = {var_name(v): (src if isinstance(src, Interval) else src[var_name(v)]).mid for v in all_delays(n)}
    vals.update(req.pinned)
    d = _matrix(n, vals)
    spec = TimerSpec(TimerStrategy.FIXED, {i: Interval.point(v) for i, v in exp.items()})
    rt = 2.0 * max(d[REQUESTER, i] + exp[i] + d[i, REQUESTER] for i in range(1, n + 1))
    prov = {"task": req.task.value, "objective": req.objective.value, "status": "feasible",
            "epsilon": req.epsilon, "ceiling": req.ceiling,
            "rules": {f"{i},{j}": b for (i, j), b in sorted(rules.items())}}
    return Scenario(d, spec, rt, exp, LossPattern(), Predicted(predict_responses(d, exp)), prov)
