import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsmstress.cli import random_scenario, stress_scenario
from tsmstress.protocol import StateSymbol, StimulusKind
from tsmstress.scenario import Objective, Scenario, Task
from tsmstress.simulator import DrawKind, TimerDraw, run, run_batch
from tsmstress.synthesis import SynthesisRequest, parse_pins, synthesize_topology
from tsmstress.topology import DelayMatrix, DomainError, LossPattern, deterministic_timers, random_topology

K = StimulusKind


def matrix(rows):
    return DelayMatrix(np.array(rows, float))


def pair(exp1, exp2, d12=10.0):
    m = matrix([[0, 10, 10], [10, 0, d12], [10, d12, 0]])
    return Scenario(m, deterministic_timers(), 1e4, {1: exp1, 2: exp2})


def test_stress_pair_no_suppression():
    sc = synthesize_topology(SynthesisRequest(Task.TOPOLOGY, Objective.WORST_OVERHEAD, 2,
                                              pinned=parse_pins(["dQ=100"], 2)))
    res = run(sc, TimerDraw(DrawKind.DETERMINISTIC))
    assert (res.responses_sent, res.suppressions) == (2, 0)


def test_clear_suppression():
    res = run(pair(5, 500))
    assert (res.responses_sent, res.suppressions) == (1, 1)
    assert res.responders_fired == {1}


@pytest.mark.parametrize("n", [1, 4, 9])
def test_best_case_single_response(n):
    sc = synthesize_topology(SynthesisRequest(Task.TOPOLOGY, Objective.BEST_OVERHEAD, n))
    for kind in (DrawKind.SCENARIO, DrawKind.DETERMINISTIC):
        assert run(sc, TimerDraw(kind)).responses_sent == 1


def test_response_time_formula():
    m = matrix([[0, 10], [20, 0]])
    sc = Scenario(m, deterministic_timers(), 1000.0, {1: 50.0}, LossPattern.single(1, K.RES_TX, 1, 0))
    res = run(sc)
    assert res.recovery_time == 1000 + 10 + 50 + 20
    assert res.rounds == 2 and res.quiescent


def test_no_response_means_no_recovery_time():
    m = matrix([[0, 10], [20, 0]])
    losses = LossPattern.single(1, K.RES_TX, 1, 0) | LossPattern.single(1, K.RES_TX, 2, 0)
    res = run(Scenario(m, deterministic_timers(), 100.0, {1: 50.0}, losses), max_time=250)
    assert res.recovery_time is None and not res.quiescent


def test_tie_timer_before_delivery():
    # the response from 1 lands on 2 exactly at 2's deadline: the fire wins
    res = run(pair(20, 30, d12=10))
    assert res.responses_sent == 2


def test_bad_draws():
    with pytest.raises(DomainError):
        TimerDraw(DrawKind.ADAPTIVE)
    with pytest.raises(DomainError):
        run(pair(1, 2), max_time=0)


@st.composite
def scenarios(draw):
    n = draw(st.integers(1, 6))
    m = np.array(draw(st.lists(st.integers(1, 40), min_size=(n + 1) ** 2, max_size=(n + 1) ** 2)), float)
    m = m.reshape(n + 1, n + 1)
    np.fill_diagonal(m, 0)
    exp = {i: float(draw(st.integers(1, 80))) for i in range(1, n + 1)}
    drops = LossPattern()
    for j in draw(st.lists(st.integers(1, n), max_size=2)):
        drops = drops | LossPattern.single(j, K.RES_TX, 1, 0)
    return Scenario(DelayMatrix(m), deterministic_timers(), 500.0, exp, drops)


@settings(max_examples=150)
@given(scenarios())
def test_invariants(sc):
    res = run(sc)
    assert res.quiescent
    assert res.final_states[0] == StateSymbol.R.value
    assert all(s == StateSymbol.D.value for s in res.final_states[1:])
    assert res.responses_sent + res.suppressions == res.dt_entries
    assert (res.recovery_time is not None) == any(
        e.stimulus.kind == K.RES_RX and e.stimulus.actor == 0 for e in res.trace)


@settings(max_examples=100)
@given(scenarios())
def test_suppression_read_from_trace(sc):
    res = run(sc)
    fired = {e.stimulus.actor for e in res.trace if e.stimulus.kind == K.RES_TIMER_FIRE}
    quiet = [e for e in res.trace if e.stimulus.kind == K.RES_RX and e.before == StateSymbol.DT
             and e.after == StateSymbol.D]
    assert fired == set(res.responders_fired)
    assert len(quiet) == res.suppressions


@settings(max_examples=40)
@given(scenarios(), st.sampled_from([DrawKind.DETERMINISTIC, DrawKind.DISTANCE, DrawKind.ADAPTIVE]),
       st.integers(0, 100))
def test_trace_replay_is_deterministic(sc, kind, seed):
    draw = TimerDraw(kind, None if kind == DrawKind.DETERMINISTIC else seed)
    assert run(sc, draw).trace_text() == run(sc, draw).trace_text()


def test_trace_formats():
    res = run(pair(5, 500))
    first = res.trace_text().splitlines()[0]
    assert first == "t=0 Q Loss@Q R->RT"
    assert '"before": "R"' in res.trace_json()


def test_random_topology_shape():
    d = random_topology(5, 1)
    off = d.array[~np.eye(5, dtype=bool)]
    assert off.size == 20 and (off > 0).all()
    assert d == random_topology(5, 1)
    assert random_topology(2, 7).array[~np.eye(2, dtype=bool)].size == 2


@pytest.mark.parametrize("nodes", [6, 20])
def test_stress_topology_all_respond(nodes):
    res = run(stress_scenario(nodes), TimerDraw(DrawKind.DETERMINISTIC))
    assert res.responses_sent == nodes - 1


def test_batch_csv_and_aggregate():
    scs = [stress_scenario(6), random_scenario(6, 3)]
    batch = run_batch(scs, DrawKind.DISTANCE, seeds=[1, 2], workers=1)
    assert len(batch.runs) == 4
    lines = batch.to_csv().splitlines()
    assert lines[0] == "scenario,seed,n,strategy,responses,suppressions,recoveryTime"
    assert lines[1].startswith("0,1,6,distance,")
    agg = batch.aggregate()
    assert agg["min_responses"] <= agg["mean_responses"] <= agg["max_responses"]
    again = run_batch(scs, DrawKind.DISTANCE, seeds=[1, 2], workers=2)
    assert again.to_csv() == batch.to_csv()


def test_batch_best_case_all_single():
    scs = [synthesize_topology(SynthesisRequest(Task.TOPOLOGY, Objective.BEST_OVERHEAD, n)) for n in (2, 5, 8)]
    assert (run_batch(scs).responses == 1).all()


def test_batch_requires_inputs():
    with pytest.raises(DomainError):
        run_batch([])
