import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsmstress import simulator
from tsmstress.constraints import (CONSERVATIVE, OPTIMISTIC, ConstraintSystem, best_overhead_system,
                                   event_time, midpoint_ordering, strictness_margin, substitute_timers,
                                   t_res_rx, timer_value, worst_overhead_system)
from tsmstress.protocol import StimulusKind
from tsmstress.scenario import Scenario
from tsmstress.symbolic import Rel, TimeExpr
from tsmstress.topology import DelayMatrix, DomainError, deterministic_timers, distance_timers, wb_timers

T = TimeExpr.parse


def test_event_times():
    assert event_time(StimulusKind.REQ_RX, 3, 0) == T("t0 + d(0,3)")
    assert t_res_rx(2, 3) == T("t0 + d(0,3) + Exp(3) + d(3,2)")
    with pytest.raises(DomainError):
        event_time(StimulusKind.REQ_RX, 0, 1)


def test_two_responders_give_two_groups():
    sys = worst_overhead_system(2)
    assert len(sys.groups) == 2 and not sys.conjuncts
    a, b = sys.groups[0]
    assert a.tag == "unwanted-before-cond(1,2)" and b.tag == "unwanted-after-wanted(1,2)"
    assert sys.choose()[0] is b


def test_ordering_drops_half_the_pairs():
    sys = worst_overhead_system(3, ordering=[1, 2, 3])
    assert sys.rows == 3
    assert sys.meta["ordering"] == [1, 2, 3]
    with pytest.raises(DomainError):
        worst_overhead_system(3, ordering=[1, 1, 3])


@pytest.mark.parametrize("n", [2, 5, 8])
def test_worst_case_row_count(n):
    assert worst_overhead_system(n).rows == n * (n - 1)


def test_best_case_shape():
    sys = best_overhead_system(2)
    assert len(sys.conjuncts) == 2 and not sys.groups
    assert {q.tag for q in sys.conjuncts} == {"cond-before-wanted(2,1)", "unwanted-after-wanted(2,1)"}
    assert best_overhead_system(1).rows == 0
    with pytest.raises(DomainError):
        best_overhead_system(3, designated=4)


def test_margin_rewrites_strict_rows():
    sys = strictness_margin(best_overhead_system(2), 1.0)
    assert all(q.rel == Rel.LE and q.rhs.constant == -1.0 or q.lhs.constant == 1.0 for q in sys.conjuncts)
    with pytest.raises(DomainError):
        strictness_margin(sys, 0.0)


def test_json_round_trip():
    sys = substitute_timers(worst_overhead_system(3), wb_timers())
    again = ConstraintSystem.from_dict(json.loads(sys.to_json()))
    assert again.to_dict() == sys.to_dict()


def test_conservative_policy_takes_the_hard_end():
    spec = distance_timers(1, 3)  # coefficient range [1, 4]
    assert timer_value(spec, 2, +1) == T("2*d(0,2) + 2*d(2,0)")
    assert timer_value(spec, 2, -1) == T("0.5*d(0,2) + 0.5*d(2,0)")
    assert timer_value(spec, 2, -1, OPTIMISTIC) == T("1.25*d(0,2) + 1.25*d(2,0)")
    with pytest.raises(DomainError):
        timer_value(spec, 2, 1, "lucky")


def test_substitution_removes_response_timers():
    sys = substitute_timers(worst_overhead_system(3), wb_timers(), CONSERVATIVE)
    assert not any(v.startswith("Exp") for v in sys.variables)


def test_midpoint_ordering():
    assert midpoint_ordering(deterministic_timers(1), 3, {1: 30, 2: 10, 3: 20}) == [2, 3, 1]


# -- oracle: the systems agree with simulation on concrete topologies --

def _scenario(n, dq, dqin, dij, exp):
    m = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        m[0, i], m[i, 0] = dq[i - 1], dqin[i - 1]
    k = 0
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i != j:
                m[i, j] = dij[k]
                k += 1
    timers = {i + 1: float(e) for i, e in enumerate(exp)}
    return Scenario(DelayMatrix(m), deterministic_timers(), 1e6, timers)


def _assignment(sc):
    out = {f"d({i},{j})": float(sc.d.array[i, j]) for i in range(sc.n + 1) for j in range(sc.n + 1) if i != j}
    out.update({f"Exp({i})": v for i, v in sc.response_timers.items()})
    return out


@st.composite
def concrete(draw, n_max=4):
    n = draw(st.integers(2, n_max))
    small = st.integers(1, 12)
    return _scenario(n, draw(st.lists(small, min_size=n, max_size=n)),
                     draw(st.lists(small, min_size=n, max_size=n)),
                     draw(st.lists(small, min_size=n * (n - 1), max_size=n * (n - 1))),
                     draw(st.lists(small, min_size=n, max_size=n)))


@settings(max_examples=150)
@given(concrete())
def test_worst_system_matches_simulation(sc):
    res = simulator.run(sc, trace=False)
    predicted = worst_overhead_system(sc.n).holds(_assignment(sc))
    assert predicted == (res.responses_sent == sc.n)


@settings(max_examples=150)
@given(concrete(), st.integers(1, 4))
def test_best_system_matches_simulation(sc, j):
    j = min(j, sc.n)
    res = simulator.run(sc, trace=False)
    predicted = best_overhead_system(sc.n, j).holds(_assignment(sc))
    assert predicted == (res.responders_fired == {j})


@pytest.mark.parametrize("spec", [deterministic_timers(2), distance_timers(1, 1), wb_timers(),
                                  wb_timers(source=9)])
@pytest.mark.parametrize("build", [lambda: worst_overhead_system(4), lambda: best_overhead_system(4, 3),
                                   lambda: worst_overhead_system(4, ordering=[2, 4, 1, 3])])
def test_pair_renaming_matches_direct_substitution(spec, build):
    sys = build()
    fast = substitute_timers(sys, spec)
    slow = substitute_timers(sys + ConstraintSystem(), spec)
    key = lambda qs: sorted((q.tag, str(q)) for q in qs)
    assert key(fast.conjuncts) == key(slow.conjuncts)
    assert sorted(map(key, fast.groups)) == sorted(map(key, slow.groups))
    assert key(fast.implied) == key(slow.implied) and fast.infeasible == slow.infeasible
    assert [str(q.diff) for q in fast.choose()] == [str(q.lhs - q.rhs) for q in fast.choose()]


@pytest.mark.parametrize("spec", [deterministic_timers(2), wb_timers()])
def test_builder_substitution_matches_composition(spec):
    built = worst_overhead_system(5, timers=spec)
    composed = substitute_timers(worst_overhead_system(5) + ConstraintSystem(), spec)
    assert [str(q) for q in built.choose()] == [str(q) for q in composed.choose()]
    assert built.meta["policy"] == composed.meta["policy"]
