import pytest
from hypothesis import given, strategies as st

from tsmstress.protocol import (TSM, ModelError, Role, StateSymbol, Stimulus, StimulusKind, Transition,
                                TransitionTable, apply, global_state, initial_global_state,
                                reachable_states)

K, S = StimulusKind, StateSymbol


def test_table_has_seven_rows():
    assert len(TSM) == 7


def test_rcv_req_sets_response_timer():
    row = TSM.row("rcv_req")
    assert row.trigger == K.REQ_RX
    assert row.start == (S.D,) and row.end == (S.DT,)


def test_res_tmr_emits_response():
    row = TSM.row("res_tmr")
    assert row.emits == (K.RES_TX,)
    assert row.end_for(S.DT) == S.D


def test_loss_at_requester():
    g, out = apply(TSM, global_state(["R", "D"]), Stimulus(K.LOSS, 0))
    assert g.as_dict() == {"Q": "RT", "1": "D"}
    assert out == [Stimulus(K.REQ_TX, 0)]


def test_response_suppresses_pending_timer():
    g, out = apply(TSM, global_state(["RT", "DT", "D"]), Stimulus(K.RES_RX, 1, 2))
    assert g[0] == S.RT and g[1] == S.D
    assert out == []


def test_response_without_timer_is_absorbed():
    g0 = global_state(["R", "D", "D"])
    g, out = apply(TSM, g0, Stimulus(K.RES_RX, 1, 2))
    assert g.per_system == g0.per_system and out == []


def test_transmission_multicasts_to_everyone_else():
    _, out = apply(TSM, initial_global_state(3), Stimulus(K.REQ_TX, 0))
    assert sorted(s.actor for s in out) == [1, 2, 3]
    assert all(s.kind == K.REQ_RX and s.sender == 0 for s in out)


@pytest.mark.parametrize("n", [1, 3, 200])
def test_initial_state(n):
    g = initial_global_state(n)
    assert len(g.per_system) == n + 1
    assert g[0] == S.R and all(s == S.D for s in g.per_system[1:])


def test_stimulus_sender_rules():
    with pytest.raises(ModelError):
        Stimulus(K.RES_RX, 1)
    with pytest.raises(ModelError):
        Stimulus(K.RES_RX, 1, 1)
    with pytest.raises(ModelError):
        Stimulus(K.LOSS, 0, 1)


def test_overlapping_rows_rejected():
    with pytest.raises(ModelError):
        TransitionTable((Transition("a", K.REQ_RX, (S.D,), (S.DT,)),
                         Transition("b", K.REQ_RX, (S.D,), (S.D,))))


def test_table_json_round_trip():
    assert TransitionTable.from_json(TSM.to_json()) == TSM


def test_reachable_states_are_the_four_symbols():
    assert reachable_states(TSM, Role.REQUESTER) | reachable_states(TSM, Role.RESPONDER) == set(S)


stimuli = st.builds(
    lambda kind, actor, sender: Stimulus(kind, actor, (actor + 1 + sender) % 4 if kind.is_reception else None),
    st.sampled_from(list(K)), st.integers(0, 3), st.integers(0, 2))
states = st.lists(st.sampled_from(list(S)), min_size=4, max_size=4)


@given(states, stimuli)
def test_apply_is_deterministic_and_closed(ps, s):
    g = global_state(ps)
    a, out_a = apply(TSM, g, s)
    b, out_b = apply(TSM, g, s)
    assert a == b and out_a == out_b
    assert all(x in set(S) for x in a.per_system)


@given(states, st.integers(1, 3), st.integers(0, 2))
def test_suppression_idempotent(ps, actor, k):
    sender = (actor + 1 + k) % 4
    s = Stimulus(K.RES_RX, actor, sender)
    once, _ = apply(TSM, global_state(ps), s)
    twice, _ = apply(TSM, once, s)
    assert once.per_system == twice.per_system
