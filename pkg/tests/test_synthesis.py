import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsmstress import simulator
from tsmstress.scenario import Objective, Scenario, Task
from tsmstress.synthesis import (InfeasibleError, SynthesisRequest, configure_timers, fixed_interval_diff,
                                 parse_pins, predict_responses, synthesize_topology, timer_chain, timer_rules)
from tsmstress.topology import (DelayMatrix, DomainError, Interval, TimerSpec, TimerStrategy,
                                deterministic_timers, distance_timers, random_topology, wb_timers)

DQ = ["dQ=100"]


def topo(objective=Objective.WORST_OVERHEAD, n=3, timers=None, pins=DQ, **kw):
    return synthesize_topology(SynthesisRequest(Task.TOPOLOGY, objective, n, timers,
                                                pinned=parse_pins(pins, n), **kw))


def test_wb_timer_case():
    sc = topo(timers=wb_timers(source=1))
    d = sc.d
    assert d[1, 2] > 300 and d[1, 3] > 300 and d[2, 3] > 200
    assert sc.predicted.response_count == 3


def test_distance_timer_case():
    sc = topo(timers=distance_timers(1, 1))
    d = sc.d
    assert d[1, 2] > 100 and d[2, 3] > 100 and d[1, 3] > 100


def test_single_responder():
    sc = topo(n=1, pins=[])
    assert sc.predicted.response_count == 1
    assert (sc.d.array[~np.eye(2, dtype=bool)] > 0).all()


def test_request_validation():
    with pytest.raises(DomainError):
        SynthesisRequest(Task.TIMERS, n=2)
    with pytest.raises(DomainError):
        SynthesisRequest(Task.TOPOLOGY, n=2, delays=Interval(1, 2))
    with pytest.raises(DomainError):
        SynthesisRequest(n=2, pinned={"d(0,1)": -1})
    with pytest.raises(DomainError):
        parse_pins(["dQ:100"], 2)


def test_pin_shorthand():
    assert parse_pins(["dQout=5", "d(1,2)=7"], 2) == {"d(0,1)": 5, "d(0,2)": 5, "d(1,2)": 7}
    assert parse_pins(["dQin=3"], 1) == {"d(1,0)": 3}


@pytest.mark.parametrize("pins", [DQ, ["dQout=40", "d(2,1)=17"], []])
def test_pins_survive(pins):
    sc = topo(n=3, pins=pins)
    for name, v in parse_pins(pins, 3).items():
        i, j = map(int, name[2:-1].split(","))
        assert sc.d[i, j] == v


@pytest.mark.parametrize("objective,n", [(Objective.WORST_OVERHEAD, 2), (Objective.WORST_OVERHEAD, 5),
                                         (Objective.BEST_OVERHEAD, 2), (Objective.BEST_OVERHEAD, 6)])
@pytest.mark.parametrize("timers", [None, wb_timers(), distance_timers(1, 1)])
def test_round_trip(objective, n, timers):
    # equal pinned requester delays leave no room for suppression, so best case runs unpinned
    sc = topo(objective, n, timers, pins=DQ if objective == Objective.WORST_OVERHEAD else [])
    assert sc.provenance["status"] == "optimal"
    res = simulator.run(sc, trace=False)
    assert res.responses_sent == sc.predicted.response_count
    assert sc.predicted.response_count == (n if objective == Objective.WORST_OVERHEAD else 1)


def test_ordered_option_recorded():
    sc = topo(n=4, ordered=True)
    assert sc.provenance["ordering"] == [1, 2, 3, 4]
    assert simulator.run(sc, trace=False).responses_sent == 4


def test_scenario_json_round_trip(tmp_path):
    sc = topo(n=3)
    path = tmp_path / "s.json"
    sc.save(str(path))
    again = Scenario.load(str(path))
    assert again.d == sc.d and again.response_timers == sc.response_timers
    assert again.predicted == sc.predicted and again.provenance == sc.provenance


def test_max_response_time_scenario():
    sc = topo(Objective.MAX_RESPONSE_TIME, n=1, pins=["dQ=10"])
    assert len(sc.losses) == 1
    res = simulator.run(sc, trace=False)
    assert res.recovery_time == pytest.approx(sc.predicted.response_time)


def test_pins_too_tight_fall_back_to_subset():
    # tiny pinned inter-responder delays make every pair suppress
    pins = DQ + [f"d({i},{j})=1" for i in range(1, 4) for j in range(1, 4) if i != j]
    sc = topo(n=3, timers=distance_timers(1, 1), pins=pins)
    assert sc.provenance["status"] == "max_subset"
    assert 1 <= sc.provenance["subset_estimate"] < 3
    assert simulator.run(sc, trace=False).responses_sent == sc.predicted.response_count


# -- interval differences --

@pytest.mark.parametrize("a,b,want", [("src", "other", (-300, 0)), ("other", "src", (0, 300)),
                                      ("other", "other", (-200, 200))])
def test_wb_role_differences(a, b, want):
    assert fixed_interval_diff(a, b) == Interval(*want)


ends = st.tuples(st.integers(1, 500), st.integers(0, 500)).map(lambda t: Interval(t[0], t[0] + t[1]))


@given(ends, ends)
def test_interval_difference_is_endpoint_extremes(x, y):
    spec = TimerSpec(TimerStrategy.FIXED, {1: x, 2: y})
    combos = [p - q for p, q in itertools.product((x.lo, x.hi), (y.lo, y.hi))]
    assert fixed_interval_diff("src", "other", spec) == Interval(min(combos), max(combos))


# -- timer configuration --

def test_gap_for_wide_delays():
    rules = timer_rules(2, Interval(2, 200))
    assert rules[(1, 2)] == pytest.approx(-196)
    sc = configure_timers(SynthesisRequest(Task.TIMERS, n=2, delays=Interval(2, 200), ceiling=400))
    assert sc.response_timers == {2: 400, 1: 203}


def test_gap_for_narrow_delays():
    assert timer_rules(2, Interval(5, 50))[(1, 2)] == pytest.approx(-40)


def test_ten_responder_chain_positive():
    sc = configure_timers(SynthesisRequest(Task.TIMERS, n=10, delays=Interval(5, 50)))
    exp = sc.response_timers
    assert min(exp.values()) > 0
    assert all(exp[i] < exp[i + 1] - 40 for i in range(1, 10))


def test_chain_reports_violation():
    with pytest.raises(InfeasibleError) as e:
        timer_chain({(1, 2): -300, (2, 3): -300, (1, 3): -600}, 3, 500, 1)
    assert "Exp(1) < Exp(2) < Exp(3)" in str(e.value)
    assert e.value.report["chain"] == [1, 2, 3]


def test_chain_no_gap_needed():
    assert timer_chain({(1, 2): 5, (2, 1): 5}, 2, 50, 1) == {1: 50, 2: 50}


@settings(max_examples=100)
@given(st.integers(0, 10_000))
def test_configured_timers_under_random_draws(seed):
    sc = configure_timers(SynthesisRequest(Task.TIMERS, n=10, delays=Interval(5, 50)))
    d = random_topology(11, seed, Interval(5, 50))
    draw = Scenario(d, sc.timers, sc.request_timer, sc.response_timers)
    res = simulator.run(draw, trace=False)
    assert res.responses_sent == predict_responses(d, sc.response_timers)
    # the smallest timer always fires, and no responder suppresses one with a smaller timer
    assert 1 in res.responders_fired


@st.composite
def concrete(draw):
    n = draw(st.integers(1, 5))
    m = np.array(draw(st.lists(st.integers(1, 30), min_size=(n + 1) ** 2, max_size=(n + 1) ** 2)), float)
    m = m.reshape(n + 1, n + 1)
    np.fill_diagonal(m, 0)
    exp = {i: float(draw(st.integers(1, 60))) for i in range(1, n + 1)}
    return DelayMatrix(m), exp


@settings(max_examples=200)
@given(concrete())
def test_predictor_matches_simulator(case):
    d, exp = case
    sc = Scenario(d, deterministic_timers(), 1e6, exp)
    assert simulator.run(sc, trace=False).responses_sent == predict_responses(d, exp)
