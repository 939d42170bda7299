"""Height functions on rational points and the associated exponent constants."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable

import mpmath


class HeightKind(enum.Enum):
    MAX = "max"
    MIN = "min"
    PROD = "prod"
    LCM = "lcm"

    @classmethod
    def parse(cls, s: "str | HeightKind") -> "HeightKind":
        if isinstance(s, HeightKind):
            return s
        return cls(s.lower())


@dataclass(frozen=True)
class RationalPoint:
    coords: tuple[Fraction, ...]

    def __init__(self, coords: Iterable):
        cs = tuple(Fraction(c) for c in coords)
        if not cs:
            raise ValueError("a point needs at least one coordinate")
        object.__setattr__(self, "coords", cs)

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def denominators(self) -> tuple[int, ...]:
        return tuple(c.denominator for c in self.coords)


def _combine(kind: HeightKind, qs: Iterable[int]) -> int:
    qs = list(qs)
    if kind is HeightKind.MAX:
        return max(qs)
    if kind is HeightKind.MIN:
        return min(qs)
    if kind is HeightKind.PROD:
        return math.prod(qs)
    return reduce(math.lcm, qs)


def height(kind: HeightKind | str, r: RationalPoint | Iterable) -> int:
    if not isinstance(r, RationalPoint):
        r = RationalPoint(r)
    return _combine(HeightKind.parse(kind), r.denominators)


def height_of_denominators(kind: HeightKind | str, qs: Iterable[int]) -> int:
    return _combine(HeightKind.parse(kind), qs)


def gamma_d(d: int):
    """(d-1)^(1/d), the optimal geometric growth rate."""
    return mpmath.mpf(d - 1) ** (mpmath.mpf(1) / d)


def alpha_d(d: int):
    """d (d-1)^(-(d-1)/d), the exponent of irrationality for H_max."""
    if d == 1:
        return mpmath.mpf(2)
    return d * mpmath.mpf(d - 1) ** (-mpmath.mpf(d - 1) / d)


def beta_d(kind: HeightKind | str, d: int) -> Fraction:
    """Multiplier in the adversary inequality: 2 for MIN (and MAX with d <= 2), 2/d for PROD."""
    kind = HeightKind.parse(kind)
    if kind is HeightKind.MIN:
        return Fraction(2)
    if kind is HeightKind.PROD:
        return Fraction(2, d)
    if kind is HeightKind.MAX:
        if d > 2:
            raise ValueError("the adversary argument for H_max only covers d <= 2")
        return Fraction(2)
    raise ValueError(f"no adversary multiplier for {kind}")


def omega_exponent(kind: HeightKind | str, d: int) -> float:
    kind = HeightKind.parse(kind)
    if d < 1:
        raise ValueError("dimension must be positive")
    if d == 1:
        return 2.0
    if kind is HeightKind.MAX:
        return float(alpha_d(d))
    if kind is HeightKind.MIN:
        return 2.0
    if kind is HeightKind.PROD:
        return 2.0 / d
    return 1.0 + 1.0 / d


@dataclass(frozen=True)
class ExponentConstants:
    d: int
    gamma_d: float
    alpha_d: float

    @classmethod
    def of(cls, d: int) -> "ExponentConstants":
        return cls(d, float(gamma_d(d)), float(alpha_d(d)))

    def beta(self, kind: HeightKind | str) -> Fraction:
        return beta_d(kind, self.d)


def check_height_chain(r: RationalPoint | Iterable) -> tuple:
    """Return (min, prod^(1/d), max, lcm, prod) after checking they are ordered.

    prod^(1/d) is compared through d-th powers so the check is exact.
    """
    if not isinstance(r, RationalPoint):
        r = RationalPoint(r)
    qs, d = r.denominators, r.d
    lo, hi = min(qs), max(qs)
    pr, lc = math.prod(qs), reduce(math.lcm, qs)
    ok = lo**d <= pr <= hi**d and hi <= lc <= pr
    if not ok:
        raise AssertionError(f"height chain violated for {qs}")
    return lo, pr ** (1.0 / d), hi, lc, pr
