import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsheight.funexpr import Const, FamilyNC, LogTransform, Scaled, parse_expr
from nsheight.recint import (NegativeFunction, Verdict, backward_sequence, classify_vs_family,
                             decide_rr, decide_rr_ode, decide_rr_recurrence, forward_C2, ignorable_margin,
                             log_transform, ode_witness, scale)


def inv_sq(C):
    return parse_expr(f"{C}/x^2")


def test_ode_tracks_closed_form_solution():
    # c - c^2 = 0.24 has the root c = 0.4, so g = 0.4/x solves the equation
    tr = ode_witness(inv_sq(0.24), 1, 0.4, 1e6)
    assert tr.termination == "HorizonReached"
    assert np.max(np.abs(np.asarray(tr.g) * np.asarray(tr.x) - 0.4)) < 1e-8
    assert tr.residual_max <= 1e-8


def test_ode_zero_function():
    tr = ode_witness(Const(0), 1, 1, 1e6)
    assert np.max(np.abs(np.asarray(tr.g) * np.asarray(tr.x) - 1)) < 1e-8


@pytest.mark.parametrize("g0", [0.01, 0.5, 1, 4, 10])
def test_ode_goes_negative_above_threshold(g0):
    tr = ode_witness(inv_sq(0.3), 1, g0, 1e6)
    assert tr.termination == "WentNegative" and tr.x_neg < 1e6


def test_ode_trace_is_decreasing():
    tr = ode_witness(inv_sq(0.2), 2, 0.3, 1e6)
    assert np.all(np.diff(tr.g) <= 0)
    assert tr.to_csv().splitlines()[0].startswith("x,")


def test_comparison_of_traces():
    t1 = ode_witness(inv_sq(0.1), 1, 0.5, 1e5)
    t2 = ode_witness(parse_expr("0.1/x^2 + 1/x^3"), 1, 0.5, 1e5)
    xs = np.geomspace(1, 1e4, 50)
    g1 = np.interp(xs, t1.x, t1.g)
    g2 = np.interp(xs, t2.x, t2.g)
    assert np.all(g1 >= g2 - 1e-9)


@pytest.mark.parametrize("C,want", [(0.2, Verdict.IN_RR), (0.3, Verdict.NOT_IN_RR)])
def test_decide_ode(C, want):
    assert decide_rr_ode(inv_sq(C)).verdict is want


def test_decide_ode_boundary_never_not_in_rr():
    assert decide_rr_ode(inv_sq(0.25)).verdict is not Verdict.NOT_IN_RR


def test_in_rr_witness_bounds_integral():
    dec = decide_rr_ode(inv_sq(0.2))
    assert dec.witness is not None
    assert dec.evidence["integral_f"] <= dec.witness.g0 + 1e-6


def test_backward_sequence_zero():
    assert list(backward_sequence(Const(0), 10, 12)) == [0, 0, 0]


def test_backward_sequence_relation():
    f = inv_sq(0.2)
    S = backward_sequence(f, 10, 500)
    ks = np.arange(10, 500)
    fk = 0.2 / ks.astype(float) ** 2
    assert np.allclose(S[:-1] - S[1:], S[1:] ** 2 + fk, rtol=1e-12, atol=1e-15)
    assert S[-1] == 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.6), st.integers(20, 2000), st.integers(1, 2000))
def test_backward_sequence_monotone_in_length(C, N, extra):
    f = inv_sq(C)
    a = backward_sequence(f, 10, N)
    b = backward_sequence(f, 10, N + extra)
    assert np.all(a <= b[: len(a)] + 1e-15)


def test_backward_sequence_converges_or_grows():
    s02 = [backward_sequence(inv_sq(0.2), 10, N)[0] for N in (10**3, 10**4, 10**5)]
    s03 = [backward_sequence(inv_sq(0.3), 10, N)[0] for N in (10**3, 10**4, 10**5)]
    assert s02[2] - s02[1] < s02[1] - s02[0]
    assert s03[2] - s03[1] > s03[1] - s03[0] > 0


@pytest.mark.parametrize("C,want", [(0.2, Verdict.IN_RR), (0.3, Verdict.NOT_IN_RR)])
def test_decide_recurrence_inverse_square(C, want):
    assert decide_rr_recurrence(inv_sq(C), k0=10).verdict is want


def test_decide_recurrence_fast_decay():
    assert decide_rr_recurrence(parse_expr("1/x^2.5")).verdict is Verdict.IN_RR


@pytest.mark.parametrize("C,want", [(Fraction(1, 5), Verdict.IN_RR), (Fraction(3, 10), Verdict.NOT_IN_RR)])
def test_family_needs_reduction(C, want):
    # x^2 f -> 1/4 only logarithmically, so the plain recurrence cannot settle
    # f_{0,C}; one inverse log transform turns it into C/x^2
    f = FamilyNC(0, C)
    assert decide_rr_recurrence(f).verdict is Verdict.UNDETERMINED
    dec = decide_rr(f, "recurrence")
    assert dec.verdict is want and dec.level >= 1


def test_forward_recurrence():
    r = forward_C2(Const(0), 0, 0.1, 10, 1000)
    assert r.first_negative is None and np.all(np.diff(r.S) < 0)
    assert forward_C2(inv_sq(0.2), 0, 0.1, 10, 10**6).first_negative is None
    for s in (0.02, 0.05, 0.1, 0.15, 0.2):
        assert forward_C2(inv_sq(0.3), 0, s, 10, 10**6).first_negative is not None


def test_forward_recurrence_guard():
    with pytest.raises(ValueError):
        forward_C2(Const(0), 10, 0.5, 10, 100)


def test_log_transform():
    assert float(log_transform(Const(0))(3)) == pytest.approx(1 / 36)
    F = log_transform(FamilyNC(1, 2))
    assert isinstance(F, FamilyNC) and F.N == 2
    G = log_transform(inv_sq(0.1))
    assert isinstance(G, LogTransform)
    x = 50.0
    assert float(G(x)) == pytest.approx((0.25 + 0.1 / math.log(x) ** 2) / x**2)


def test_log_transform_of_positive_constant_is_not_in_rr():
    assert decide_rr(log_transform(Const(Fraction(1, 10)))).verdict is Verdict.NOT_IN_RR


def test_scale():
    f = inv_sq(0.3)
    assert scale(f, 1) is f
    s = scale(f, 7)
    assert isinstance(s, Scaled)
    for x in (2.0, 30.0, 1e4):
        assert float(s(x)) == pytest.approx(float(f(x)), rel=1e-14)
    with pytest.raises(ValueError):
        scale(f, 0)


@pytest.mark.parametrize("C", [Fraction(1, 5), Fraction(3, 10)])
def test_scale_invariance_of_decision(C):
    f = FamilyNC(0, C)
    assert decide_rr(scale(f, 2)).verdict is decide_rr(f).verdict


def test_negative_function_is_rejected():
    with pytest.raises(NegativeFunction):
        decide_rr(parse_expr("-1/x^2"))


def test_ignorable_margin():
    assert ignorable_margin(inv_sq(0.2), parse_expr("1/x^3")).verdict is Verdict.IN_RR
    assert ignorable_margin(inv_sq(0.2), inv_sq(0.1)).verdict is Verdict.NOT_IN_RR
    assert ignorable_margin(FamilyNC(0, Fraction(1, 5)), parse_expr("log(x)/x^3")).verdict is Verdict.IN_RR


def test_classify_vs_family():
    pos = classify_vs_family(inv_sq(0.2))
    assert (pos.N, pos.side) == (-1, "BelowInRR") and pos.verdict is Verdict.IN_RR
    pos = classify_vs_family(parse_expr("1/x^1.9"))
    assert pos.side == "AboveNotInRR" and pos.verdict is Verdict.NOT_IN_RR
    pos = classify_vs_family(FamilyNC(1, Fraction(1, 5)))
    assert (pos.N, pos.C, pos.side) == (1, 0.25, "BelowInRR")


def test_decision_serializes():
    import json
    d = json.loads(decide_rr(inv_sq(0.2)).to_json())
    assert d["verdict"] == "InRR"
