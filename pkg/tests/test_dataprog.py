import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from nsheight.cfrac import GOLDEN, convergents, denominators_to_cf, expand_real, sqrt_real
from nsheight.dataprog import (DataProgression, InvalidProgression, MoveResult, Trend, UndefinedState,
                               XiKind, adversary_step, classify_periodic_geometric, cost, feasible_moves,
                               merge_keys, periodic_cost_closed_form, periodic_geometric, point_from_progression,
                               progression_from_point, random_play, state_seq, validate, variance,
                               variance_descent_report, warmup)
from nsheight.heights import alpha_d, gamma_d

A3 = float(alpha_d(3))
G3 = float(gamma_d(3))


def test_small_state_sequence():
    p = DataProgression(2, [(1, 1), (2, 2), (3, 1), (4, 2), (5, 1)])
    assert warmup(p) == 3
    # b_{k+1}^(i_k) = A_{k+1}: coordinate 1 got A_2 = 2, coordinate 2 got A_3 = 3
    assert state_seq(p, (3, 3))[0].b == (2, 3)
    with pytest.raises(UndefinedState):
        state_seq(p, (1, 2))


def test_one_coordinate_changes_per_step():
    rng = random.Random(3)
    p = DataProgression(4, generator=lambda k: (k + rng.random(), rng.randint(1, 4)))
    states = state_seq(p, range(warmup(p), 300))
    for s, t in zip(states, states[1:]):
        assert sum(a != b for a, b in zip(s.b, t.b)) <= 1


def test_periodic_geometric_states():
    assert set(state_seq(periodic_geometric(3, 2), (4, 4))[0].b) == {16, 8, 4}
    for s in state_seq(periodic_geometric(2, 2), range(3, 12)):
        assert set(s.b) == {2**s.k, 2 ** (s.k - 1)}


def test_periodic_geometric_rejects_bad_parameters():
    with pytest.raises(ValueError):
        periodic_geometric(3, 1)
    with pytest.raises(ValueError):
        periodic_geometric(1, 2)


def test_validate():
    assert validate(periodic_geometric(3, 1.2)).ok
    bad = DataProgression(2, [(1, 1), (2, 2), (1.5, 1), (3, 2)] * 3)
    with pytest.raises(InvalidProgression):
        validate(bad)
    assert not validate(bad, strict=False).ok
    stuck = DataProgression(2, generator=lambda k: (1 - 1 / k, 1) if k % 2 else (5, 2))
    assert not validate(stuck, strict=False).ok


def test_cost_at_optimal_growth_vanishes():
    rep = cost(periodic_geometric(3, G3), "max", lambda b: A3 * b, 60)
    assert rep.trend is Trend.ZERO
    assert all(abs(v) <= 1e-9 * G3**k for k, v in rep.values)


def test_cost_trends():
    assert cost(periodic_geometric(3, 1.5), "max", lambda b: A3 * b, 60).trend is Trend.NEG_INF
    assert cost(periodic_geometric(3, 1.26), "max", lambda b: 2.0 * b, 60).trend is Trend.POS_INF


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.floats(1.05, 3.0), st.floats(0.0, 4.0))
def test_cost_matches_closed_form(d, gamma, alpha):
    rep = cost(periodic_geometric(d, gamma), "max", lambda b: alpha * b, 40)
    for k, v in rep.values:
        want = periodic_cost_closed_form(d, gamma, alpha, k)
        assert v == pytest.approx(want, rel=1e-10, abs=1e-10 * gamma**k)


def test_classify_periodic_geometric():
    assert classify_periodic_geometric(3, gamma_d(3), alpha_d(3)) is Trend.ZERO
    assert classify_periodic_geometric(3, 1.5, A3) is Trend.NEG_INF
    assert classify_periodic_geometric(3, 1.26, 2.0) is Trend.POS_INF


def test_cost_csv_layout():
    p = periodic_geometric(3, 1.2)
    lines = cost(p, "max", lambda b: 2 * b, 10).to_csv(p).splitlines()
    assert lines[0] == "k,b1,b2,b3,cost"
    assert len(lines[1].split(",")) == 5


def test_json_round_trip():
    p = DataProgression(2, [(Fraction(1, 2), 1), (3, 2), (5, 1)])
    q = DataProgression.from_json(p.to_json())
    assert [(float(a), i) for a, i in q.entries()] == [(0.5, 1), (3, 2), (5, 1)]


def test_xi_kinds():
    assert XiKind.parse("max")((1, 5, 2)) == 5
    assert XiKind.parse("min")((1, 5, 2)) == 1
    assert XiKind.parse("sum")((1, 5, 2)) == 8


def fib(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def test_golden_ratio_progression_is_log_fibonacci():
    p = progression_from_point([expand_real(GOLDEN, 40)])
    for k in range(1, 30):
        assert float(mpmath.exp(p.A(k))) == pytest.approx(fib(k), rel=1e-12)
        assert p.i(k) == 1


def test_two_coordinate_merge():
    xs = [expand_real(GOLDEN, 40), expand_real(sqrt_real(2), 40)]
    p = progression_from_point(xs)
    assert validate(p, K=len(p) - 2).ok
    keys = merge_keys(p, len(p) - 2)
    assert all(b >= a for a, b in zip(keys, keys[1:]))
    fibs = [c.q * d.q for c, d in zip(convergents(xs[0]), convergents(xs[0])[1:])]
    pells = [c.q * d.q for c, d in zip(convergents(xs[1]), convergents(xs[1])[1:])]
    merged = sorted(fibs + pells)
    off = merged.index(round(float(keys[0])))
    for k, m in zip(keys, merged[off:]):
        assert float(k) == pytest.approx(m, rel=1e-9)


def test_point_from_progression_powers_of_two():
    p = DataProgression(1, [(k * mpmath.log(2), 1) for k in range(1, 40)])
    pc = point_from_progression(p, 20)
    assert pc.targets[0][:4] == [1, 4, 8, 16]
    assert pc.sandwich_ok
    assert pc.coords[0] == denominators_to_cf(pc.targets[0])


def test_point_sandwich_and_round_trip():
    src = periodic_geometric(3, G3)
    pc = point_from_progression(src, 10)
    assert pc.sandwich_ok and not any(pc.rational)
    for cf, ms in zip(pc.coords, pc.milestones):
        qs = [c.q for c in convergents(cf)][1:]
        for q, m in zip(qs, ms):
            assert abs(math.log(q) - float(m)) <= math.log(2) + 1e-9
    back = progression_from_point(pc.coords)
    per = {i: [] for i in (1, 2, 3)}
    for k in range(1, len(back)):
        per[back.i(k)].append(float(back.A(k + 1)))
    for j in (1, 2, 3):
        for got, want in zip(per[j], pc.milestones[j - 1]):
            assert abs(got - float(want)) <= math.log(2) + 0.01


def test_coordinate_touched_finitely_often_is_rational():
    entries = [(1, 1), (2, 2)] + [(k, 2) for k in range(3, 80)]
    pc = point_from_progression(DataProgression(2, entries), 5)
    assert pc.rational == [True, False]


def test_adversary_examples():
    assert adversary_step("prod", Fraction(1), (10, 10), (Fraction(21, 2), 1)) is MoveResult.INFEASIBLE
    assert feasible_moves("prod", Fraction(1), (10, 10)) == []
    assert adversary_step("min", 2, (5, 10), (6, 1)) is MoveResult.INFEASIBLE
    assert adversary_step("prod", 1, (2, 10), (9, 1)) is MoveResult.ACCEPTED
    assert variance((9, 10)) < variance((2, 10))
    with pytest.raises(ValueError):
        adversary_step("prod", 1, (2, 10), (1, 1))


def test_variance_report_examples():
    rep = variance_descent_report([(2, 10), (9, 10)])
    assert rep.variances == [16, Fraction(1, 4)] and rep.n_k_steps == 0
    assert variance_descent_report([(Fraction(0), Fraction(20))]).budget == 400
    with pytest.raises(AssertionError):
        variance_descent_report([(0, 1), (0, 5)])


@pytest.mark.parametrize("kind,d", [("min", 2), ("prod", 3), ("max", 2)])
def test_random_plays_die_within_budget(kind, d):
    rng = random.Random(11)
    for _ in range(100):
        res = random_play(kind, d, rng)
        assert res.died
        assert res.report.ok and res.report.n_k_steps <= res.report.budget


def test_equal_start_has_no_moves():
    res = random_play("prod", 3, random.Random(0), start=[5, 5, 5])
    assert res.died and len(res.states) == 1
