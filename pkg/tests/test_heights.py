import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from nsheight.heights import (ExponentConstants, HeightKind, RationalPoint, alpha_d, beta_d,
                              check_height_chain, gamma_d, height, height_of_denominators, omega_exponent)


def test_height_examples():
    r = [Fraction(1, 2), Fraction(1, 3)]
    assert height("max", r) == 3
    assert height("min", r) == 2
    assert height("prod", r) == 6
    assert height("lcm", r) == 6
    assert height(HeightKind.LCM, [Fraction(1, 4), Fraction(1, 6)]) == 12


def test_height_reduces_coordinates():
    assert height("max", [Fraction(2, 4), Fraction(3, 9)]) == 3
    assert RationalPoint(["2/4", 1]).denominators == (2, 1)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.fractions(max_denominator=10**6), min_size=1, max_size=6))
def test_height_chain_ordering(coords):
    lo, geo, hi, lc, pr = check_height_chain(coords)
    qs = [c.denominator for c in coords]
    assert lo == min(qs) and hi == max(qs) and pr == math.prod(qs)
    assert lo <= hi <= lc <= pr


def test_constants_closed_forms():
    for d in range(2, 11):
        assert abs(float(gamma_d(d)) - (d - 1) ** (1 / d)) < 1e-14
        assert abs(float(alpha_d(d)) - d * (d - 1) ** (-(d - 1) / d)) < 1e-13


def test_alpha_is_gamma_plus_reciprocal_power():
    with mpmath.workprec(200):
        for d in range(2, 11):
            g = gamma_d(d)
            assert abs(alpha_d(d) - (g + g ** (-(d - 1)))) < mpmath.mpf(10) ** -55


def test_omega_exponents():
    assert omega_exponent("max", 2) == pytest.approx(2.0, abs=1e-15)
    assert omega_exponent("max", 3) == pytest.approx(1.8898815748423097, abs=1e-15)
    assert omega_exponent("min", 5) == 2.0
    assert omega_exponent("prod", 4) == 0.5
    assert omega_exponent("lcm", 3) == pytest.approx(4 / 3)
    for kind in HeightKind:
        assert omega_exponent(kind, 1) == 2.0
    with pytest.raises(ValueError):
        omega_exponent("max", 0)


def test_beta():
    assert beta_d("min", 7) == 2
    assert beta_d("prod", 3) == Fraction(2, 3)
    assert beta_d("max", 2) == 2
    with pytest.raises(ValueError):
        beta_d("max", 3)
    with pytest.raises(ValueError):
        beta_d("lcm", 2)


def test_height_of_denominators_and_constants_record():
    assert height_of_denominators("lcm", [4, 6, 10]) == 60
    c = ExponentConstants.of(3)
    assert c.beta("prod") == Fraction(2, 3)
    assert c.alpha_d == pytest.approx(1.8898815748)
