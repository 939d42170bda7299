import math
from fractions import Fraction

import mpmath
import pytest

from nsheight.cfrac import GOLDEN, convergents, expand_real, sqrt_real
from nsheight.dataprog import periodic_geometric, point_from_progression
from nsheight.dirichlet import (DVerdict, NotRecursivelyIntegrable, build_bad_point_for_max, dirichlet_decide,
                                dirichlet_decide_family, estimate_C, estimate_omega, family_reduction,
                                gamma_optimum_check, minprod_uniform_check)
from nsheight.funexpr import (FPsi, PowerLaw, UnsupportedDimension, leading_constant, parse_psi,
                              psi_alpha_d, psi_NC)
from nsheight.heights import alpha_d, gamma_d


def test_power_law_below_critical_is_dirichlet():
    assert dirichlet_decide(PowerLaw(Fraction(9, 5)), 3).verdict is DVerdict.DIRICHLET


def test_critical_power_law_is_not_dirichlet():
    v = dirichlet_decide(psi_alpha_d(3), 3)
    assert v.verdict is DVerdict.NOT_DIRICHLET
    assert v.nonnegativity["sign"] == "nonpositive"


def test_faster_decay_is_not_dirichlet():
    assert dirichlet_decide(PowerLaw(2), 3).verdict is DVerdict.NOT_DIRICHLET


def test_corrected_exponent_with_large_constant_is_dirichlet():
    # C = 2 times the leading constant in the exponent correction
    assert dirichlet_decide(psi_NC(3, 1, 2), 3).verdict is DVerdict.DIRICHLET


@pytest.mark.parametrize("c", [Fraction(1, 2), 2])
@pytest.mark.parametrize("C", [Fraction(1, 2), 2])
def test_verdict_invariant_under_scaling_psi(c, C):
    psi = psi_NC(3, 1, C)
    assert dirichlet_decide(psi.scaled(c), 3).verdict is dirichlet_decide(psi, 3).verdict


def test_dimension_guard():
    with pytest.raises(UnsupportedDimension):
        dirichlet_decide(PowerLaw(2), 2)


def test_family_reduction_identity():
    scaled, inner = family_reduction(3, 1, 2)
    f = FPsi(psi_NC(3, 1, 2), 3)
    for x in (50.0, 1e4):
        assert float(f(x)) == pytest.approx(float(scaled(x)), rel=1e-12)
    assert inner.N == -1 and inner.C == Fraction(1, 2)


@pytest.mark.parametrize("N,C,want", [
    (1, 2, {DVerdict.DIRICHLET}),
    (1, Fraction(1, 2), {DVerdict.NOT_DIRICHLET}),
    (2, 1, {DVerdict.NOT_DIRICHLET, DVerdict.UNDETERMINED}),
])
def test_family_decisions(N, C, want):
    assert dirichlet_decide_family(3, N, C, cross_check=False).verdict in want


def test_minprod_uniform():
    rep = minprod_uniform_check("prod", 2, trials=200)
    assert rep.all_died and rep.equal_start_moves == 0
    rep = minprod_uniform_check("min", 3, trials=200)
    assert rep.max_k_steps <= rep.max_budget
    assert minprod_uniform_check("max", 2, trials=100).all_died
    with pytest.raises(ValueError):
        minprod_uniform_check("max", 3, trials=1)


def test_gamma_optimum_d3():
    rep = gamma_optimum_check(3)
    assert abs(rep.argmax - 2 ** (1 / 3)) < 1e-6
    assert abs(rep.argmax_grid - 1.259921) <= 1e-3
    assert abs(rep.max_value - 1) < 1e-12
    assert rep.unique_on_grid
    with mpmath.workprec(200):
        g = gamma_d(3)
        assert abs((alpha_d(3) - g) * g**2 - 1) < mpmath.mpf(10) ** -50


def test_gamma_optimum_d4_sum():
    rep = gamma_optimum_check(4)
    assert rep.min_sum == pytest.approx(4 * 3 ** (-3 / 4), abs=1e-9)
    assert rep.argmin_sum == pytest.approx(3 ** (1 / 4), abs=1e-6)
    assert rep.min_sum == pytest.approx(1.754765, abs=1e-6)


def hurwitz_oracle(n):
    phi = (1 + mpmath.sqrt(5)) / 2
    best = mpmath.inf
    for c in convergents(expand_real(GOLDEN, n + 2))[2:n]:
        best = min(best, c.q**2 * abs(phi - mpmath.mpf(c.p) / c.q))
    return best


def test_hurwitz_constant():
    with mpmath.workprec(200):
        est = estimate_C([GOLDEN], "max", PowerLaw(2), Q_max=10**6)
        assert float(est.estimate) == pytest.approx(1 / math.sqrt(5), abs=1e-3)
        assert float(est.estimate) >= float(hurwitz_oracle(30)) - 1e-9


def test_estimate_C_two_dimensional_positive():
    est = estimate_C([GOLDEN, sqrt_real(2)], "min", PowerLaw(2), Q_max=10**6)
    assert 0 < float(est.global_min) < math.inf


def test_estimate_C_constant_psi_goes_to_zero():
    small = estimate_C([sqrt_real(2)], "max", PowerLaw(0), Q_max=10**3)
    big = estimate_C([sqrt_real(2)], "max", PowerLaw(0), Q_max=10**9)
    assert float(big.global_min) < float(small.global_min) < 1e-4


def test_estimate_C_running_min_nonincreasing():
    est = estimate_C([sqrt_real(3, -1), sqrt_real(2, -1)], "prod", PowerLaw(1), Q_max=10**6)
    vals = [float(v) for _, v in est.running_min]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert est.to_csv().startswith("Q,C_running_min")


def test_estimate_C_order_in_psi():
    x = [sqrt_real(3, -1), sqrt_real(2, -1)]
    a = estimate_C(x, "min", PowerLaw(Fraction(21, 10)), Q_max=10**5)
    b = estimate_C(x, "min", PowerLaw(2), Q_max=10**5)
    assert a.global_min >= b.global_min


def test_estimate_omega_badly_approximable_pair():
    x = [sqrt_real(2, -1), sqrt_real(3, -1)]
    assert estimate_omega(x, "min", Q_max=10**6).estimate == pytest.approx(2, abs=0.1)
    assert estimate_omega(x, "prod", Q_max=10**6).estimate == pytest.approx(1, abs=0.05)


def test_estimate_omega_geometric_point():
    pc = point_from_progression(periodic_geometric(3, gamma_d(3)), 12)
    assert estimate_omega(pc.point, "max").estimate == pytest.approx(float(alpha_d(3)), abs=0.05)


def test_bad_point_for_critical_power_law():
    bp = build_bad_point_for_max(3, 15)
    assert bp.cost_min >= 0 and all(s >= 0 for s in bp.S)
    assert any("nonpositive" in line for line in bp.log)


def test_bad_point_for_family_member():
    bp = build_bad_point_for_max(3, 12, psi_NC(3, 1, Fraction(1, 2)))
    assert bp.cost_min >= 0


def test_bad_point_refused_when_dirichlet():
    with pytest.raises(NotRecursivelyIntegrable):
        build_bad_point_for_max(3, 10, psi_NC(3, 1, 2))


def test_parsed_critical_psi_is_exact():
    assert FPsi(parse_psi("power:alpha_d(5)"), 5)(1e3) == 0
