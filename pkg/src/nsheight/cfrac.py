"""Exact continued fractions.

Expansion of rationals and certified reals, convergents, the error bracket
1/(q_n(q_n+q_{n+1})) <= |x - p_n/q_n| <= 1/(q_n q_{n+1}), and the greedy
construction of a number whose convergent denominators follow a prescribed
doubling sequence.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath

Rational = Fraction


class PrecisionExhausted(ArithmeticError):
    """The enclosing interval straddles an integer before the requested depth."""


class InvalidSequence(ValueError):
    pass


class CounterexampleReport(AssertionError):
    def __init__(self, message: str, ratios: list | None = None):
        super().__init__(message)
        self.ratios = ratios or []


@dataclass(frozen=True)
class Convergent:
    p: int
    q: int
    index: int

    @property
    def value(self) -> Fraction:
        return Fraction(self.p, self.q)


@dataclass(frozen=True)
class ContinuedFraction:
    a0: int
    partial_quotients: tuple[int, ...] = ()

    def __post_init__(self):
        if any(a < 1 for a in self.partial_quotients):
            raise ValueError("partial quotients must be >= 1")

    @property
    def quotients(self) -> list[int]:
        return [self.a0, *self.partial_quotients]

    def __len__(self):
        return len(self.partial_quotients)

    def to_json(self) -> str:
        return json.dumps(self.quotients)

    @classmethod
    def from_json(cls, text: str) -> "ContinuedFraction":
        qs = json.loads(text)
        return cls(int(qs[0]), tuple(int(a) for a in qs[1:]))

    @classmethod
    def from_list(cls, qs: Sequence[int]) -> "ContinuedFraction":
        return cls(int(qs[0]), tuple(int(a) for a in qs[1:]))

    def value(self) -> Fraction:
        """Exact value of the finite expansion."""
        c = convergents(self)[-1]
        return Fraction(c.p, c.q)

    def __str__(self):
        if not self.partial_quotients:
            return f"[{self.a0}]"
        return f"[{self.a0}; " + ", ".join(map(str, self.partial_quotients)) + "]"


def expand_rational(r: Fraction | int | str) -> ContinuedFraction:
    r = Fraction(r)
    p, q = r.numerator, r.denominator
    a0, p = divmod(p, q)
    qs = []
    while p:
        q, p = p, q
        a, p = divmod(p, q)
        qs.append(a)
    # Euclid never yields a trailing 1 except for the degenerate [a0; 1]
    if qs and qs[-1] == 1:
        qs.pop()
        if qs:
            qs[-1] += 1
        else:
            a0 += 1
    return ContinuedFraction(a0, tuple(qs))


# A certified real is a callable taking an mpmath interval context (already
# set to the working precision) and returning an enclosure of x.
RealSpec = Callable[[object], object]


def interval_context(prec: int):
    ctx = mpmath.ctx_iv.MPIntervalContext()
    ctx.prec = prec
    return ctx


def real_from_mpmath(expr: Callable[[object], object]) -> RealSpec:
    """Mark ``expr(ctx)`` as a certified real, e.g. ``lambda c: c.sqrt(2) - 1``."""
    return expr


def real_from_rational(r: Fraction) -> RealSpec:
    r = Fraction(r)
    return lambda c: c.mpf(r.numerator) / r.denominator


GOLDEN = real_from_mpmath(lambda c: (1 + c.sqrt(5)) / 2)
PI = real_from_mpmath(lambda c: c.pi)


def sqrt_real(n: int, shift: int = 0) -> RealSpec:
    return real_from_mpmath(lambda c: c.sqrt(n) + shift)


def expand_real(x: RealSpec, depth: int, precision: int = 256) -> ContinuedFraction:
    """Floor-and-invert on an interval enclosure of x.

    Every returned quotient is constant on the current enclosure, so it is a
    quotient of the true x. Raises PrecisionExhausted otherwise.
    Exact rationals are expanded with Euclid's algorithm instead.
    """
    if isinstance(x, (Fraction, int)):
        cf = expand_rational(x)
        return ContinuedFraction.from_list(cf.quotients[: depth])
    ctx = interval_context(precision)
    iv = ctx.convert(x(ctx))
    qs: list[int] = []
    for _ in range(depth):
        lo, hi = mpmath.floor(iv.a), mpmath.floor(iv.b)
        if lo != hi:
            raise PrecisionExhausted(
                f"enclosure straddles an integer after {len(qs)} quotients at {precision} bits"
            )
        a = int(lo)
        qs.append(a)
        frac = iv - a
        if frac.a <= 0:
            if frac.b == 0:
                break  # exactly rational
            raise PrecisionExhausted(f"enclosure touches zero after {len(qs)} quotients")
        iv = 1 / frac
    return ContinuedFraction(qs[0], tuple(qs[1:]))


def real_value(x: RealSpec, precision: int):
    """Midpoint of the enclosure as an mpf together with its radius."""
    ctx = interval_context(precision)
    iv = ctx.convert(x(ctx))
    with mpmath.workprec(precision):
        return mpmath.mpf(iv.mid), mpmath.mpf(iv.delta) / 2


def convergents(cf: ContinuedFraction | Sequence[int], upto: int | None = None) -> list[Convergent]:
    qs = cf.quotients if isinstance(cf, ContinuedFraction) else list(cf)
    if upto is not None:
        if upto + 1 > len(qs):
            raise ValueError(f"need {upto + 1} quotients, have {len(qs)}")
        qs = qs[: upto + 1]
    p2, q2, p1, q1 = 0, 1, 1, 0
    out = []
    for n, a in enumerate(qs):
        p, q = a * p1 + p2, a * q1 + q2
        out.append(Convergent(p, q, n))
        p2, q2, p1, q1 = p1, q1, p, q
    return out


def convergent_error_bracket(
    cf: ContinuedFraction, n: int, x: RealSpec | Fraction | None = None, precision: int = 256
) -> tuple[Fraction, Fraction]:
    """Exact bounds on |x - p_n/q_n|.

    The bracket is degenerate (0, 0) at the last index of a finite expansion.
    When x is supplied the true error is checked against the bracket.
    """
    cs = convergents(cf)
    if n == len(cs) - 1:
        lower = upper = Fraction(0)
    elif n > len(cs) - 1:
        raise ValueError("index beyond expansion")
    else:
        qn, qn1 = cs[n].q, cs[n + 1].q
        lower, upper = Fraction(1, qn * (qn + qn1)), Fraction(1, qn * qn1)
    if x is not None:
        err = approximation_error(x, Fraction(cs[n].p, cs[n].q), precision)
        slack = mpmath.mpf(2) ** (-(precision - 8))
        with mpmath.workprec(precision):
            if not (mpmath.mpf(lower.numerator) / lower.denominator - slack <= err
                    <= mpmath.mpf(upper.numerator) / upper.denominator + slack):
                raise AssertionError(f"error {err} outside bracket [{lower}, {upper}]")
    return lower, upper


def approximation_error(x: RealSpec | Fraction, r: Fraction, precision: int = 256):
    """|x - r| as an mpf, exact when x is rational."""
    if isinstance(x, (Fraction, int)):
        e = abs(Fraction(x) - r)
        with mpmath.workprec(precision):
            return mpmath.mpf(e.numerator) / e.denominator
    mid, _ = real_value(x, precision)
    with mpmath.workprec(precision):
        return abs(mid - mpmath.mpf(r.numerator) / r.denominator)


def denominators_to_cf(target_q: Sequence[int]) -> ContinuedFraction:
    """Greedy quotients a_M = max{a : a q_{M-1} + q_{M-2} <= target_M}.

    Guarantees target_n/2 <= q_n <= target_n for every n.
    """
    target = [int(t) for t in target_q]
    if not target or target[0] != 1:
        raise InvalidSequence("target sequence must start with 1")
    for a, b in zip(target, target[1:]):
        if b < 2 * a:
            raise InvalidSequence(f"doubling condition fails: {b} < 2*{a}")
    q2, q1 = 0, 1  # q_{-1}, q_0
    qs = []
    for t in target[1:]:
        a = (t - q2) // q1
        qs.append(a)
        q2, q1 = q1, a * q1 + q2
    return ContinuedFraction(0, tuple(qs))


def best_approx_reduce(
    x: RealSpec | Fraction,
    r: Fraction,
    constants: tuple[Fraction, Fraction] = (Fraction(1, 2), Fraction(1, 8)),
    cf: ContinuedFraction | None = None,
    precision: int = 256,
) -> int:
    """Smallest n with q >= c1 q_n and |x - r| >= c2 |x - p_n/q_n|.

    Raises CounterexampleReport (with the measured ratios) when no index
    qualifies.
    """
    r = Fraction(r)
    c1, c2 = (Fraction(c) for c in constants)
    if cf is None:
        depth = 8
        while True:
            cf = (expand_rational(x) if isinstance(x, (Fraction, int))
                  else expand_real(x, depth, precision))
            cs = convergents(cf)
            if cs[-1].q > 2 * r.denominator or isinstance(x, (Fraction, int)):
                break
            depth *= 2
    cs = convergents(cf)
    err = approximation_error(x, r, precision)
    ratios = []
    for c in cs:
        if r.denominator < c1 * c.q:
            break
        e_n = approximation_error(x, Fraction(c.p, c.q), precision)
        ratios.append((c.index, float(err / e_n) if e_n else float("inf")))
        with mpmath.workprec(precision):
            if err >= (mpmath.mpf(c2.numerator) / c2.denominator) * e_n:
                return c.index
    raise CounterexampleReport(f"no convergent index dominates {r}", ratios)


def worst_reduce_ratio(x: RealSpec, rationals: Iterable[Fraction], precision: int = 256) -> float:
    """Smallest achievable |x-r| / |x-p_n/q_n| over admissible n, worst over r.

    Measures how close the c2 constant is to being violated.
    """
    cf = expand_real(x, 40, precision)
    cs = convergents(cf)
    worst = float("inf")
    for r in rationals:
        err = approximation_error(x, r, precision)
        best = 0.0
        for c in cs:
            if r.denominator < c.q / 2:
                break
            e_n = approximation_error(x, Fraction(c.p, c.q), precision)
            if e_n:
                best = max(best, float(err / e_n))
        worst = min(worst, best)
    return worst
