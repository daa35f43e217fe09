from hypothesis import given, strategies as st

from tsmstress.symbolic import LinearInequality, Rel, TimeExpr, delay, timer


def test_parse_and_print_round_trip():
    e = TimeExpr.parse("t0 + d(0,1) + Exp(1) - 2*d(1,2) + 3")
    assert TimeExpr.parse(str(e)) == e
    assert e.origin == 1 and e.constant == 3


def test_t0_cancels_in_inequality():
    a = TimeExpr.t0() + TimeExpr.var(delay(0, 1))
    b = TimeExpr.t0() + TimeExpr.var(timer(1))
    q = LinearInequality(a, Rel.LT, b)
    assert q.diff.origin == 0


def test_status_from_positivity():
    x = TimeExpr.var(delay(0, 1))
    y = TimeExpr.var(timer(1))
    assert LinearInequality(x, Rel.LT, x + y).status() is True
    assert LinearInequality(x + y, Rel.LT, x).status() is False
    assert LinearInequality(x, Rel.LT, y).status() is None


def test_margin_rewrites_strict_rows_only():
    x, y = TimeExpr.var(delay(0, 1)), TimeExpr.var(delay(1, 0))
    assert str(LinearInequality(x, Rel.LT, y).margined(1.0)) == "d(0,1) <= d(1,0) - 1"
    le = LinearInequality(x, Rel.LE, y)
    assert le.margined(1.0) == le


def test_inequality_dict_round_trip():
    q = LinearInequality(TimeExpr.parse("d(0,1) + Exp(1)"), Rel.LT, TimeExpr.parse("d(0,2) + Exp(2) + d(2,1)"),
                         "tag")
    assert LinearInequality.from_dict(q.to_dict()) == q


names = st.sampled_from([delay(0, 1), delay(1, 0), delay(1, 2), timer(1), timer(2)])
exprs = st.lists(st.tuples(names, st.integers(-3, 3)), max_size=5).map(TimeExpr.make)
values = st.fixed_dictionaries({v: st.floats(0.5, 100) for v in
                                [delay(0, 1), delay(1, 0), delay(1, 2), timer(1), timer(2)]})


@given(exprs, exprs, values)
def test_arithmetic_matches_evaluation(a, b, vals):
    assert abs((a + b).evaluate(vals) - (a.evaluate(vals) + b.evaluate(vals))) < 1e-9
    assert abs((a - b).evaluate(vals) - (a.evaluate(vals) - b.evaluate(vals))) < 1e-9


@given(exprs, values)
def test_substitution_matches_evaluation(a, vals):
    rep = TimeExpr.parse("d(0,1) + 5")
    sub = a.substitute({timer(1): rep, timer(2): 7})
    direct = dict(vals)
    direct[timer(1)] = rep.evaluate(vals)
    direct[timer(2)] = 7
    assert abs(sub.evaluate(vals) - a.evaluate(direct)) < 1e-9
