import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsmstress.protocol import StimulusKind
from tsmstress.topology import (DelayMatrix, DomainError, Interval, LossPattern, MessageId, Relation,
                                TimerSpec, TimerStrategy, backward_offset_interval, distance_timers,
                                estimated_distance, interval_cmp_branches, random_topology, wb_timers)

LT, EQ, GT = Relation.LT, Relation.EQ, Relation.GT


@pytest.mark.parametrize("a,b,expected", [
    ((3, 5), (4, 6), {LT, EQ, GT}),
    ((3, 5), (5, 7), {LT, EQ}),
    ((2, 2), (2, 2), {EQ}),
])
def test_interval_branches(a, b, expected):
    assert interval_cmp_branches(Interval(*a), Interval(*b)) == expected


@pytest.mark.parametrize("exp,expected", [((100, 200), (0, 200)), ((0, 0), (0, 0)), ((5, 50), (0, 50))])
def test_backward_offset(exp, expected):
    assert backward_offset_interval(Interval(*exp)) == Interval(*expected)


def _matrix(dq_out, dq_in):
    return DelayMatrix([[0, dq_out], [dq_in, 0]])


def test_estimated_distance():
    assert estimated_distance(_matrix(100, 100), 1) == 100
    assert estimated_distance(_matrix(40, 60), 1) == 50
    with pytest.raises(DomainError):
        estimated_distance(_matrix(40, 60), 0)


def test_delay_matrix_validation():
    with pytest.raises(DomainError):
        DelayMatrix([[0, 0], [1, 0]])
    with pytest.raises(DomainError):
        DelayMatrix([[1, 2], [3, 0]])
    with pytest.raises(DomainError):
        DelayMatrix([[0, -1], [1, 0]])


def test_delay_matrix_csv_round_trip():
    d = random_topology(4, seed=3)
    assert DelayMatrix.from_csv(d.to_csv()) == d


def test_random_topology():
    d = random_topology(5, seed=1, delay_range=Interval(5, 50))
    off = d.array[~np.eye(5, dtype=bool)]
    assert off.size == 20 and np.all(off >= 5) and np.all(off <= 50)
    assert random_topology(5, seed=1) == d
    assert len(random_topology(2, seed=9).edge_list()) == 2


def test_distance_timer_interval():
    d = DelayMatrix([[0, 100, 80], [100, 0, 5], [120, 5, 0]])
    spec = distance_timers(1, 1)
    assert spec.response_interval(1, d) == Interval(100, 200)
    assert spec.response_interval(2, d) == Interval(100, 200)


def test_wb_timer_roles():
    spec = wb_timers(source=1)
    assert spec.fixed_interval(1) == Interval(100, 200)
    assert spec.fixed_interval(3) == Interval(200, 400)


def test_timer_spec_round_trip():
    for spec in (wb_timers(), distance_timers(1, 2), TimerSpec(TimerStrategy.ADAPTIVE)):
        assert TimerSpec.from_dict(spec.to_dict()) == spec


def test_selective_loss():
    loss = LossPattern.single(1, StimulusKind.RES_TX, 1, 0)
    msg = MessageId(1, StimulusKind.RES_TX, 1)
    assert loss.dropped(msg, 0) and not loss.dropped(msg, 2)
    assert not loss.dropped(MessageId(1, StimulusKind.RES_TX, 2), 0)
    assert LossPattern.from_list(loss.to_list()) == loss


intervals = st.tuples(st.integers(0, 20), st.integers(0, 10)).map(lambda t: Interval(t[0], t[0] + t[1]))


@given(intervals, intervals)
def test_branches_exhaustive_and_disjoint_cases(a, b):
    rel = interval_cmp_branches(a, b)
    assert rel
    if not a.intersects(b):
        assert EQ not in rel and len(rel) == 1


@given(intervals, intervals)
def test_branches_match_grid_enumeration(a, b):
    # integer endpoints: the half-step grid contains witnesses for every relation
    xs = np.arange(a.lo, a.hi + 0.25, 0.5)
    ys = np.arange(b.lo, b.hi + 0.25, 0.5)
    brute = set()
    for x, y in itertools.product(xs, ys):
        brute.add(LT if x < y else GT if x > y else EQ)
    assert interval_cmp_branches(a, b) == brute


@given(intervals, intervals)
def test_interval_difference_matches_endpoints(a, b):
    diff = a - b
    ends = [x - y for x in (a.lo, a.hi) for y in (b.lo, b.hi)]
    assert diff == Interval(min(ends), max(ends))
