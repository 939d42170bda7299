"""Expression trees for approximation functions and their derived transforms.

Expressions are immutable trees over constants, one argument, + - * /, pow,
exp and log.  They evaluate either with mpmath at a chosen precision or
vectorised in float64.  An evaluation point may be given by its logarithm,
which lets psi(exp(gamma^x)) be handled without materialising exp(gamma^x).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import mpmath
import numpy as np

from .heights import alpha_d as _alpha_d
from .heights import gamma_d as _gamma_d

DEFAULT_PREC = 113
# exp(u) is refused once |u| exceeds 2**EXP_BUDGET_BITS; mpmath would need that
# many extra bits of working precision.
EXP_BUDGET_BITS = 4096
# working precision beyond which adaptive evaluation gives up
PREC_BUDGET_BITS = 1 << 16


class DomainError(ValueError):
    pass


class EvaluationTooCostly(DomainError):
    """The argument is so large that evaluation would need an enormous precision."""


class UnsupportedDimension(ValueError):
    pass


class ParseError(ValueError):
    pass


def _mpf(c) -> mpmath.mpf:
    if isinstance(c, Fraction):
        return mpmath.mpf(c.numerator) / c.denominator
    return mpmath.mpf(c)


def _exp(u):
    if u > 0 and mpmath.mag(u) > EXP_BUDGET_BITS:
        raise EvaluationTooCostly(f"exp of a number with {int(mpmath.mag(u))}-bit magnitude")
    return mpmath.exp(u)


def iterated_exp(i: int, x: float = 1.0) -> float:
    for _ in range(i):
        x = math.exp(x)
    return x


class Argument:
    """An evaluation point known by value, by logarithm, or both."""

    __slots__ = ("_value", "_log")

    def __init__(self, value=None, log=None):
        if value is None and log is None:
            raise ValueError("need a value or a logarithm")
        self._value = None if value is None else _mpf(value)
        self._log = None if log is None else _mpf(log)

    def value(self):
        if self._value is None:
            self._value = _exp(self._log)
        return self._value

    def log(self):
        if self._log is None:
            if self._value <= 0:
                raise DomainError("log of a non-positive argument")
            self._log = mpmath.log(self._value)
        return self._log

    def exceeds(self, lo) -> bool:
        """Whether the point lies strictly above lo."""
        if lo is None or lo == -math.inf:
            return True
        if self._value is not None:
            return self._value > lo
        if lo <= 0:
            return True
        return self._log > mpmath.log(lo)


def _adaptive(fn: Callable[[], object], scale, hint_bits: int = 0) -> object:
    """Evaluate fn with growing precision until the result clears its cancellation.

    fn's result is a difference of quantities of size ~scale.  A result is
    accepted once it clears the noise floor and a second evaluation at higher
    precision agrees with it to the caller's working precision; the check
    catches conditioning that the floor alone misses (huge arguments, nested
    reductions).  Values still below the floor at the last attempt are
    returned as 0.
    """
    target = mpmath.mp.prec
    p = target + 32 + max(0, int(hint_bits))
    if p > PREC_BUDGET_BITS:
        raise EvaluationTooCostly(f"cancellation needs about {p} bits")
    with mpmath.workprec(p):
        r = fn()
    for _ in range(6):
        floor = abs(scale) * mpmath.mpf(2) ** (-(p - target - 8))
        q = 2 * p
        if q > PREC_BUDGET_BITS:
            break
        with mpmath.workprec(q):
            r2 = fn()
        if r != 0 and abs(r) > floor and abs(r2 - r) <= abs(r2) * mpmath.mpf(2) ** (-target):
            return +r2
        r, p = r2, q
    floor = abs(scale) * mpmath.mpf(2) ** (-(p - target - 8))
    if abs(r) <= floor:
        return mpmath.mpf(0)
    raise EvaluationTooCostly(f"no stable value within {PREC_BUDGET_BITS} bits")


class Expr:
    """Base expression node.  Subclasses provide _v and optionally _lv."""

    precedence = 100
    domain_lo: float = -math.inf

    # ---- evaluation -------------------------------------------------------
    def _v(self, a: Argument):
        raise NotImplementedError

    def _lv(self, a: Argument):
        v = self._v(a)
        if v <= 0:
            raise DomainError(f"log of non-positive value in {self}")
        return mpmath.log(v)

    def _arr(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no float path")

    def threshold(self, v: float):
        """Some x beyond which this node exceeds v (and keeps growing), or None."""
        return None

    def at(self, a: Argument, precision: int | None = None):
        if not a.exceeds(self.domain_lo):
            raise DomainError(f"evaluation below the domain guard x > {self.domain_lo} of {self}")
        with mpmath.workprec(precision or DEFAULT_PREC):
            return +self._v(a)

    def __call__(self, x, precision: int | None = None):
        return self.at(Argument(value=x), precision)

    def at_log(self, logx, precision: int | None = None):
        """Evaluate at x = exp(logx) without forming x unless needed."""
        return self.at(Argument(log=logx), precision)

    def log_at_log(self, logx, precision: int | None = None):
        """log(f(exp(logx))), evaluated in the log domain."""
        a = Argument(log=logx)
        if not a.exceeds(self.domain_lo):
            raise DomainError(f"evaluation below the domain guard of {self}")
        with mpmath.workprec(precision or DEFAULT_PREC):
            return +self._lv(a)

    def eval_array(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if np.any(x <= self.domain_lo):
            raise DomainError(f"evaluation below the domain guard x > {self.domain_lo} of {self}")
        with np.errstate(all="ignore"):
            out = self._arr(x)
        if not np.all(np.isfinite(out)):
            raise DomainError(f"non-finite float evaluation of {self}")
        return out

    def has_float_path(self) -> bool:
        return all(c.has_float_path() for c in self.children) and type(self)._arr is not Expr._arr

    @property
    def children(self) -> tuple["Expr", ...]:
        return ()

    # ---- structure --------------------------------------------------------
    def prefix(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return self.prefix()

    def __eq__(self, other):
        return isinstance(other, Expr) and self.prefix() == other.prefix()

    def __hash__(self):
        return hash(self.prefix())

    # ---- operator sugar ---------------------------------------------------
    def __add__(self, o):
        return Add(self, as_expr(o))

    def __radd__(self, o):
        return Add(as_expr(o), self)

    def __sub__(self, o):
        return Sub(self, as_expr(o))

    def __rsub__(self, o):
        return Sub(as_expr(o), self)

    def __mul__(self, o):
        return Mul(self, as_expr(o))

    def __rmul__(self, o):
        return Mul(as_expr(o), self)

    def __truediv__(self, o):
        return Div(self, as_expr(o))

    def __rtruediv__(self, o):
        return Div(as_expr(o), self)

    def __pow__(self, o):
        return Pow(self, as_expr(o))

    def __neg__(self):
        return Neg(self)


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, Fraction)):
        return Const(Fraction(v))
    if isinstance(v, float):
        return Const(Fraction(v).limit_denominator(10**15) if v == round(v, 12) else v)
    return Const(v)


def eval(expr: Expr, x, precision: int = DEFAULT_PREC):  # noqa: A001 - mirrors the operation name
    return expr(x, precision)


class Const(Expr):
    def __init__(self, c):
        self.c = c

    def _v(self, a):
        return _mpf(self.c)

    def _arr(self, x):
        return np.full_like(x, float(self.c))

    def exact(self, x: Fraction):
        if isinstance(self.c, Fraction):
            return self.c
        raise TypeError("inexact constant")

    def prefix(self):
        c = self.c
        if isinstance(c, Fraction):
            return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
        return mpmath.nstr(_mpf(c), 20)


class NamedConst(Expr):
    """gamma_d(d) or alpha_d(d), evaluated at the working precision."""

    _fns = {"gamma_d": _gamma_d, "alpha_d": _alpha_d}

    def __init__(self, name: str, d: int):
        if name not in self._fns:
            raise ParseError(f"unknown constant {name}")
        self.name, self.d = name, int(d)

    def _v(self, a):
        return self._fns[self.name](self.d)

    def _arr(self, x):
        return np.full_like(x, float(self._fns[self.name](self.d)))

    def prefix(self):
        return f"({self.name} {self.d})"


class Arg(Expr):
    def __init__(self, name: str = "x"):
        self.name = name

    def _v(self, a):
        return a.value()

    def _lv(self, a):
        return a.log()

    def _arr(self, x):
        return x

    def threshold(self, v):
        return v

    def exact(self, x: Fraction):
        return Fraction(x)

    def prefix(self):
        return self.name


class _Binary(Expr):
    sym = "?"

    def __init__(self, a: Expr, b: Expr):
        self.a, self.b = as_expr(a), as_expr(b)
        self.domain_lo = max(self.a.domain_lo, self.b.domain_lo)

    @property
    def children(self):
        return (self.a, self.b)

    def prefix(self):
        return f"({self.sym} {self.a.prefix()} {self.b.prefix()})"


class Add(_Binary):
    sym = "add"

    def _v(self, a):
        return self.a._v(a) + self.b._v(a)

    def _arr(self, x):
        return self.a._arr(x) + self.b._arr(x)

    def threshold(self, v):
        if isinstance(self.b, (Const, NamedConst)):
            return self.a.threshold(v - float(self.b._v(None)))
        if isinstance(self.a, (Const, NamedConst)):
            return self.b.threshold(v - float(self.a._v(None)))
        if v >= 0:
            ta, tb = self.a.threshold(v / 2), self.b.threshold(v / 2)
            if ta is not None and tb is not None:
                return max(ta, tb)
        return None

    def exact(self, x):
        return self.a.exact(x) + self.b.exact(x)


class Sub(_Binary):
    sym = "sub"

    def _v(self, a):
        return self.a._v(a) - self.b._v(a)

    def _arr(self, x):
        return self.a._arr(x) - self.b._arr(x)

    def threshold(self, v):
        if isinstance(self.b, (Const, NamedConst)):
            return self.a.threshold(v + float(self.b._v(None)))
        return None

    def exact(self, x):
        return self.a.exact(x) - self.b.exact(x)


class Mul(_Binary):
    sym = "mul"

    def _v(self, a):
        return self.a._v(a) * self.b._v(a)

    def _lv(self, a):
        return self.a._lv(a) + self.b._lv(a)

    def _arr(self, x):
        return self.a._arr(x) * self.b._arr(x)

    def threshold(self, v):
        for c, e in ((self.a, self.b), (self.b, self.a)):
            if isinstance(c, (Const, NamedConst)):
                k = float(c._v(None))
                if k > 0:
                    return e.threshold(v / k)
        if v >= 0:
            # both factors growing: each above sqrt(v) suffices
            ta, tb = self.a.threshold(math.sqrt(v)), self.b.threshold(math.sqrt(v))
            if ta is not None and tb is not None:
                return max(ta, tb)
        return None

    def exact(self, x):
        return self.a.exact(x) * self.b.exact(x)


class Div(_Binary):
    sym = "div"

    def __init__(self, a, b):
        super().__init__(a, b)
        t = self.b.threshold(0.0)
        if t is not None:
            self.domain_lo = max(self.domain_lo, t)

    def _v(self, a):
        den = self.b._v(a)
        if den == 0:
            raise DomainError(f"division by zero in {self}")
        return self.a._v(a) / den

    def _lv(self, a):
        return self.a._lv(a) - self.b._lv(a)

    def _arr(self, x):
        return self.a._arr(x) / self.b._arr(x)

    def exact(self, x):
        return self.a.exact(x) / self.b.exact(x)


class Pow(_Binary):
    sym = "pow"

    def __init__(self, a, b):
        super().__init__(a, b)
        integral = isinstance(self.b, Const) and isinstance(self.b.c, Fraction) and self.b.c.denominator == 1
        if not integral:
            t = self.a.threshold(0.0)
            if t is not None:
                self.domain_lo = max(self.domain_lo, t)

    def _integral_exponent(self):
        if isinstance(self.b, Const) and isinstance(self.b.c, Fraction) and self.b.c.denominator == 1:
            return int(self.b.c)
        return None

    def _v(self, a):
        n = self._integral_exponent()
        if n is not None and isinstance(self.a, Arg) and a._value is None:
            return _exp(n * a.log())
        base = self.a._v(a)
        if n is not None:
            if base == 0 and n < 0:
                raise DomainError("zero to a negative power")
            return base**n
        if base <= 0:
            raise DomainError(f"non-positive base to a real power in {self}")
        return _exp(self.b._v(a) * mpmath.log(base))

    def _lv(self, a):
        return self.b._v(a) * self.a._lv(a)

    def _arr(self, x):
        return np.power(self.a._arr(x), self.b._arr(x))

    def threshold(self, v):
        if isinstance(self.b, Const) and float(self.b.c) > 0 and v >= 0:
            return self.a.threshold(v ** (1.0 / float(self.b.c)))
        return None

    def exact(self, x):
        n = self._integral_exponent()
        if n is None:
            raise TypeError("exact evaluation needs an integer exponent")
        return self.a.exact(x) ** n


class Neg(Expr):
    def __init__(self, a):
        self.a = as_expr(a)
        self.domain_lo = self.a.domain_lo

    @property
    def children(self):
        return (self.a,)

    def _v(self, a):
        return -self.a._v(a)

    def _arr(self, x):
        return -self.a._arr(x)

    def exact(self, x):
        return -self.a.exact(x)

    def prefix(self):
        return f"(neg {self.a.prefix()})"


class Exp(Expr):
    def __init__(self, a):
        self.a = as_expr(a)
        self.domain_lo = self.a.domain_lo

    @property
    def children(self):
        return (self.a,)

    def _v(self, a):
        return _exp(self.a._v(a))

    def _lv(self, a):
        return self.a._v(a)

    def _arr(self, x):
        return np.exp(self.a._arr(x))

    def threshold(self, v):
        if v <= 0:
            return self.a.domain_lo
        return self.a.threshold(math.log(v))

    def prefix(self):
        return f"(exp {self.a.prefix()})"


class Log(Expr):
    def __init__(self, a):
        self.a = as_expr(a)
        t = self.a.threshold(0.0)
        self.domain_lo = max(self.a.domain_lo, t if t is not None else -math.inf)

    @property
    def children(self):
        return (self.a,)

    def _v(self, a):
        return self.a._lv(a)

    def _arr(self, x):
        return np.log(self.a._arr(x))

    def threshold(self, v):
        return self.a.threshold(math.exp(v)) if v < 700 else None

    def prefix(self):
        return f"(log {self.a.prefix()})"


class IterLog(Expr):
    """log applied i times to the argument; guarded by x > exp^(i-1)(1)."""

    def __init__(self, i: int, name: str = "x"):
        if i < 0:
            raise ValueError("iteration count must be >= 0")
        self.i, self.name = i, name
        self.domain_lo = iterated_exp(i - 1, 1.0) if i >= 1 else -math.inf

    def _v(self, a):
        if self.i == 0:
            return a.value()
        v = a.log()
        for _ in range(self.i - 1):
            if v <= 0:
                raise DomainError("iterated log of a non-positive value")
            v = mpmath.log(v)
        return v

    def _lv(self, a):
        v = self._v(a)
        if v <= 0:
            raise DomainError("log of a non-positive iterated log")
        return mpmath.log(v)

    def _arr(self, x):
        for _ in range(self.i):
            x = np.log(x)
        return x

    def threshold(self, v):
        try:
            return iterated_exp(self.i, v)
        except OverflowError:
            return None

    def prefix(self):
        return f"(ilog {self.i} {self.name})"


def iterated_log(i: int, name: str = "x") -> Expr:
    return IterLog(i, name)


# ---------------------------------------------------------------------------
# the f_{N,C} family and the transforms that relate its members


class FamilyNC(Expr):
    """f_{N,C}(x) = 1/4 sum_{n<=N} prod_{i<=n} L_i^-2 + C prod_{i<=N+1} L_i^-2, L_i = log^(i) x.

    Evaluated in the log domain so arguments like exp(exp(50)) are cheap.
    """

    def __init__(self, N: int, C):
        if N < -1:
            raise ValueError("N must be >= -1")
        self.N, self.C = int(N), C
        self.domain_lo = iterated_exp(N, 1.0) if N >= 0 else 0.0

    def _log_levels(self, a: Argument, upto: int):
        # logs of L_0 .. L_upto
        out = [a.log()]
        L = a.log()
        for _ in range(upto):
            if L <= 0:
                raise DomainError("iterated log of a non-positive value")
            out.append(mpmath.log(L))
            L = out[-1]
        return out

    def _v(self, a):
        lls = self._log_levels(a, self.N + 1)
        quarter = mpmath.mpf(1) / 4
        total = mpmath.mpf(0)
        acc = mpmath.mpf(0)
        for n in range(self.N + 1):
            acc += lls[n]
            total += quarter * mpmath.exp(-2 * acc)
        acc += lls[self.N + 1]
        return total + _mpf(self.C) * mpmath.exp(-2 * acc)

    def _arr(self, x):
        prod = np.ones_like(x)
        total = np.zeros_like(x)
        L = x
        for n in range(self.N + 2):
            prod = prod / (L * L)
            if n <= self.N:
                total = total + 0.25 * prod
            L = np.log(L)
        return total + float(self.C) * prod

    def unwrap_log_transform(self) -> Expr:
        if self.N == -1:
            return Const(Fraction(self.C) - Fraction(1, 4)) if isinstance(self.C, (int, Fraction)) \
                else Const(_mpf(self.C) - mpmath.mpf(1) / 4)
        return FamilyNC(self.N - 1, self.C)

    def prefix(self):
        c = self.C
        cs = (str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}") \
            if isinstance(c, Fraction) else repr(c)
        return f"(fNC {self.N} {cs})"


def f_NC(N: int, C) -> Expr:
    if isinstance(C, float):
        C = Fraction(C).limit_denominator(10**12)
    return FamilyNC(N, C)


class LogTransform(Expr):
    """F(x) = (1/x^2) [1/4 + f(log x)]."""

    def __init__(self, inner: Expr):
        self.inner = inner
        lo = inner.domain_lo
        self.domain_lo = max(math.exp(lo) if lo < 700 else math.inf, 0.0) if lo > -math.inf else 0.0

    @property
    def children(self):
        return (self.inner,)

    def _v(self, a):
        y = a.log()
        inner = self.inner._v(Argument(value=y))
        return (mpmath.mpf(1) / 4 + inner) * mpmath.exp(-2 * y)

    def _arr(self, x):
        return (0.25 + self.inner._arr(np.log(x))) / (x * x)

    def unwrap_log_transform(self) -> Expr:
        return self.inner

    def prefix(self):
        return f"(logtransform {self.inner.prefix()})"


class Scaled(Expr):
    """f_lambda(x) = lambda^2 f(lambda x)."""

    def __init__(self, inner: Expr, lam):
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        self.inner, self.lam = inner, lam
        self.domain_lo = inner.domain_lo / float(lam) if inner.domain_lo > -math.inf else -math.inf

    @property
    def children(self):
        return (self.inner,)

    def _v(self, a):
        lam = _mpf(self.lam)
        if a._value is not None:
            b = Argument(value=lam * a._value)
        else:
            b = Argument(log=a.log() + mpmath.log(lam))
        return lam * lam * self.inner._v(b)

    def _arr(self, x):
        lam = float(self.lam)
        return lam * lam * self.inner._arr(lam * x)

    def prefix(self):
        return f"(scale {self.inner.prefix()} {mpmath.nstr(_mpf(self.lam), 15)})"


class Shifted(Expr):
    """h(y) = f(y + log lam); the shift a scaling becomes under the inverse log transform."""

    def __init__(self, inner: Expr, lam):
        if lam <= 0:
            raise ValueError("scale factor must be positive")
        self.inner, self.lam = inner, lam
        lo = inner.domain_lo
        self.domain_lo = lo - math.log(float(lam)) if lo > -math.inf else -math.inf

    @property
    def children(self):
        return (self.inner,)

    def _v(self, a):
        return self.inner._v(Argument(value=a.value() + mpmath.log(_mpf(self.lam))))

    def _arr(self, x):
        return self.inner._arr(x + math.log(float(self.lam)))

    def prefix(self):
        return f"(shiftlog {self.inner.prefix()} {mpmath.nstr(_mpf(self.lam), 15)})"


class InverseLogTransform(Expr):
    """g(y) = e^{2y} f(e^y) - 1/4, so that f = LogTransform(g).

    Evaluated with adaptive precision since both terms are close to 1/4.
    """

    def __init__(self, inner: Expr):
        self.inner = inner
        lo = inner.domain_lo
        self.domain_lo = math.log(lo) if lo > 1 else 0.0

    @property
    def children(self):
        return (self.inner,)

    def _v(self, a):
        y = a.value()
        quarter = mpmath.mpf(1) / 4

        def go():
            return _exp(2 * y) * self.inner._v(Argument(log=y)) - quarter

        return _adaptive(go, quarter, 2 * max(0, int(mpmath.mag(y))))

    def prefix(self):
        return f"(invlogtransform {self.inner.prefix()})"


def inverse_log_transform(f: Expr) -> Expr:
    """Exact unwrap when f is built as a log transform, numeric otherwise."""
    if isinstance(f, (LogTransform, FamilyNC)):
        return f.unwrap_log_transform()
    # lam^2 F(lam x) with F = LogTransform(G) unwraps to G(y + log lam)
    if isinstance(f, Scaled) and isinstance(f.inner, (LogTransform, FamilyNC)):
        return Shifted(f.inner.unwrap_log_transform(), f.lam)
    return InverseLogTransform(f)


# ---------------------------------------------------------------------------
# approximation functions psi and their derived forms


class PsiSpec:
    """An approximation function psi(q), held as an expression in q."""

    expr: Expr

    def __call__(self, q, precision: int = DEFAULT_PREC):
        return self.expr(q, precision)

    def log_at_log(self, logq, precision: int = DEFAULT_PREC):
        return self.expr.log_at_log(logq, precision)

    def exact(self, q: Fraction) -> Fraction:
        return self.expr.exact(Fraction(q))

    def scaled(self, c) -> "PsiSpec":
        return Custom(Mul(as_expr(c), self.expr))

    @property
    def domain_lo(self):
        return self.expr.domain_lo

    def __repr__(self):
        return f"{type(self).__name__}({self.expr.prefix()})"


class PowerLaw(PsiSpec):
    """psi(q) = q^(-alpha); alpha may be an expression such as NamedConst("alpha_d", d)."""

    def __init__(self, alpha):
        if isinstance(alpha, Expr):
            self.alpha = alpha
            self.expr = Pow(Arg("q"), Neg(alpha))
            return
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        if isinstance(alpha, int):
            alpha = Fraction(alpha)
        self.alpha = alpha
        self.expr = Pow(Arg("q"), Const(-alpha))


def psi_alpha_d(d: int) -> PowerLaw:
    """q^(-alpha_d) with the exponent carried symbolically at every precision."""
    return PowerLaw(NamedConst("alpha_d", d))


def leading_constant(d: int):
    """d gamma_d log^2(gamma_d) / 8."""
    g = _gamma_d(d)
    return d * g * mpmath.log(g) ** 2 / 8


class _LeadingConst(Expr):
    def __init__(self, d):
        self.d = d

    def _v(self, a):
        return leading_constant(self.d)

    def _arr(self, x):
        return np.full_like(x, float(leading_constant(self.d)))

    def prefix(self):
        return f"(leading_d {self.d})"


class FamilyNCPsi(PsiSpec):
    """psi_{N,C}(q) = q^(-alpha_d + K_d [sum_{n=2}^N prod_{i=2}^n L_i^-2 + C prod_{i=2}^{N+1} L_i^-2])."""

    def __init__(self, d: int, N: int, C):
        if d < 3:
            raise UnsupportedDimension("psi_{N,C} needs d >= 3")
        if N < 1 or C < 0:
            raise ValueError("need N >= 1 and C >= 0")
        self.d, self.N, self.C = d, N, C
        q = "q"
        terms: list[Expr] = []
        for n in range(2, N + 1):
            prod: Expr = Const(Fraction(1))
            for i in range(2, n + 1):
                prod = Div(prod, Pow(IterLog(i, q), Const(Fraction(2))))
            terms.append(prod)
        tail: Expr = as_expr(C)
        for i in range(2, N + 2):
            tail = Div(tail, Pow(IterLog(i, q), Const(Fraction(2))))
        bracket = tail
        for t in reversed(terms):
            bracket = Add(t, bracket)
        exponent = Add(Neg(NamedConst("alpha_d", d)), Mul(_LeadingConst(d), bracket))
        self.expr = Pow(Arg(q), exponent)


def psi_NC(d: int, N: int, C) -> PsiSpec:
    if isinstance(C, float):
        C = Fraction(C).limit_denominator(10**12)
    return FamilyNCPsi(d, N, C)


class Custom(PsiSpec):
    def __init__(self, expr: Expr):
        self.expr = expr


class BigPsi(Expr):
    """Psi(b) = -log psi(e^b)."""

    def __init__(self, psi: PsiSpec):
        self.psi = psi
        lo = psi.domain_lo
        self.domain_lo = math.log(lo) if lo > 0 else -math.inf

    def _v(self, a):
        return -self.psi.expr._lv(Argument(log=a.value()))

    def prefix(self):
        return f"(bigpsi {self.psi.expr.prefix()})"


class PhiForm(Expr):
    """Phi(b) = alpha_d - Psi(b)/b."""

    def __init__(self, psi: PsiSpec, d: int):
        self.psi, self.d = psi, d
        lo = psi.domain_lo
        self.domain_lo = max(math.log(lo) if lo > 0 else 0.0, 0.0)

    def _v(self, a):
        b = a.value()
        alpha = _alpha_d(self.d)
        return _adaptive(lambda: alpha + self.psi.expr._lv(Argument(log=b)) / b, alpha)

    def prefix(self):
        return f"(phi {self.d} {self.psi.expr.prefix()})"


class FPsi(Expr):
    """f_psi(x) = (2/(d gamma_d)) [alpha_d + log psi(e^{gamma_d^x}) / gamma_d^x]."""

    def __init__(self, psi: PsiSpec, d: int):
        if d < 2:
            raise UnsupportedDimension("f_psi needs d >= 2")
        self.psi, self.d = psi, d
        lo = psi.domain_lo
        g = float(_gamma_d(d))
        loglo = math.log(lo) if lo > 1 else 0.0
        # need gamma^x > log(lo)
        self.domain_lo = math.log(loglo) / math.log(g) if loglo > 1 and g > 1 else 0.0

    def _v(self, a):
        x = a.value()

        def go():
            g = _gamma_d(self.d)
            alpha = _alpha_d(self.d)
            b = _exp(x * mpmath.log(g))
            return 2 / (self.d * g) * (alpha + self.psi.expr._lv(Argument(log=b)) / b)

        # f_psi is typically of size 1/x^2 relative to alpha_d
        return _adaptive(go, _alpha_d(self.d), 2 * max(0, int(mpmath.mag(x))))

    def prefix(self):
        return f"(fpsi {self.d} {self.psi.expr.prefix()})"


@dataclass(frozen=True)
class DerivedForms:
    bigPsi: Expr
    phi: Expr
    f_psi: Expr


def derive_forms(psi: PsiSpec, d: int) -> DerivedForms:
    if d < 2:
        raise UnsupportedDimension("derived forms reference gamma_d and alpha_d, need d >= 2")
    return DerivedForms(BigPsi(psi), PhiForm(psi, d), FPsi(psi, d))


# ---------------------------------------------------------------------------
# sampled comparisons


def _log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(math.log(lo), math.log(hi), n)


def eventually_compare(f: Expr, g: Expr, window: tuple[float, float] = (1e4, 1e12),
                       samples: int = 512, precision: int = DEFAULT_PREC) -> str:
    """Sign of f - g on a log grid: 'LE', 'GE' or 'MIXED'.

    A sampled stand-in for the eventual-sign dichotomy of Hardy functions, not
    a proof.  Identical functions report 'LE'.
    """
    lo, hi = window
    if lo <= max(f.domain_lo, g.domain_lo):
        raise DomainError(f"window starts at {lo}, inside a domain guard")
    le = ge = True
    for s in _log_grid(lo, hi, samples):
        diff = f.at_log(s, precision) - g.at_log(s, precision)
        le &= diff <= 0
        ge &= diff >= 0
        if not (le or ge):
            return "MIXED"
    return "LE" if le else "GE"


@dataclass
class PsiHypothesisReport:
    increasing: bool
    violations: list = field(default_factory=list)
    max_slope: float = 0.0
    window: tuple = ()

    @property
    def ok(self) -> bool:
        return self.increasing


def validate_psi_hypotheses(psi: PsiSpec, window: tuple[float, float] = (1e4, 1e12),
                            samples: int = 256) -> PsiHypothesisReport:
    """Check Psi(b) = -log psi(e^b) is increasing with bounded slope on a q-window."""
    lo, hi = window
    if lo <= psi.domain_lo:
        lo = psi.domain_lo * (1 + 1e-9) + 1e-12
    bs = np.linspace(math.log(lo), math.log(hi), samples)
    vals = [float(-psi.log_at_log(b)) for b in bs]
    slopes = np.diff(vals) / np.diff(bs)
    bad = [(float(bs[i]), float(slopes[i])) for i in range(len(slopes)) if slopes[i] <= 0]
    return PsiHypothesisReport(increasing=not bad, violations=bad,
                               max_slope=float(np.max(np.abs(slopes))), window=(lo, hi))


# ---------------------------------------------------------------------------
# text syntax

_PREFIX_OPS = {"add", "sub", "mul", "div", "pow", "neg", "exp", "log", "ilog",
               "fNC", "gamma_d", "alpha_d", "sqrt", "logtransform", "scale"}
ARG_NAMES = ("x", "q", "b", "y", "t")
_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^(),]))")


def _tokens(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif name is not None:
            out.append(("name", name))
        else:
            out.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return out


def _number(tok: str) -> Const:
    return Const(Fraction(tok))


def _named(name: str, args: list, argname: str) -> Expr:
    def need(k):
        if len(args) != k:
            raise ParseError(f"{name} takes {k} argument(s)")

    if name in ("exp", "log", "sqrt", "neg", "logtransform"):
        need(1)
        a = args[0]
        return {"exp": Exp, "log": Log, "neg": Neg, "logtransform": LogTransform}.get(
            name, lambda e: Pow(e, Const(Fraction(1, 2))))(a)
    if name == "ilog":
        if len(args) == 1:
            args = [args[0], Arg(argname)]
        need(2)
        return IterLog(_int_of(args[0]), getattr(args[1], "name", argname))
    if name == "fNC":
        need(2)
        return f_NC(_int_of(args[0]), _const_of(args[1]))
    if name in ("gamma_d", "alpha_d"):
        need(1)
        return NamedConst(name, _int_of(args[0]))
    if name == "scale":
        need(2)
        return Scaled(args[0], _const_of(args[1]))
    if name in ("add", "sub", "mul", "div", "pow"):
        need(2)
        return {"add": Add, "sub": Sub, "mul": Mul, "div": Div, "pow": Pow}[name](*args)
    raise ParseError(f"unknown function {name!r}")


def _const_of(e: Expr):
    if isinstance(e, Neg) and isinstance(e.a, Const):
        return -e.a.c
    if not isinstance(e, Const):
        raise ParseError("expected a numeric constant")
    return e.c


def _int_of(e: Expr) -> int:
    c = _const_of(e)
    if Fraction(c).denominator != 1:
        raise ParseError("expected an integer")
    return int(c)


def _atom_name(name: str, argname: str) -> Expr:
    if name in ARG_NAMES:
        return Arg(name)
    if name == "e":
        return Exp(Const(Fraction(1)))
    if name == "pi":
        return Const(mpmath.pi)
    raise ParseError(f"unknown identifier {name!r}")


class _Infix:
    def __init__(self, toks, argname):
        self.toks, self.i, self.argname = toks, 0, argname

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, kind=None, val=None):
        t = self.peek()
        if t[0] is None or (kind and t[0] != kind) or (val and t[1] != val):
            raise ParseError(f"expected {val or kind}, got {t[1]!r}")
        self.i += 1
        return t

    def expr(self):
        e = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            e = Add(e, self.term()) if op == "+" else Sub(e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            e = Mul(e, self.unary()) if op == "*" else Div(e, self.unary())
        return e

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return Neg(self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return _number(val)
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                self.take()
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.take("op", ")")
                return _named(val, args, self.argname)
            return _atom_name(val, self.argname)
        if (kind, val) == ("op", "("):
            self.take()
            e = self.expr()
            self.take("op", ")")
            return e
        raise ParseError(f"unexpected token {val!r}")


def _parse_prefix(text: str, argname: str) -> Expr:
    toks = re.findall(r"\(|\)|[^\s()]+", text)
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(toks):
            raise ParseError("unexpected end of expression")
        t = toks[pos]
        pos += 1
        if t == "(":
            if pos >= len(toks):
                raise ParseError("unexpected end of expression")
            head = toks[pos]
            pos += 1
            args = []
            while pos < len(toks) and toks[pos] != ")":
                args.append(read())
            if pos >= len(toks):
                raise ParseError("missing ')'")
            pos += 1
            return _named(head, args, argname)
        if t == ")":
            raise ParseError("unexpected ')'")
        if re.fullmatch(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?(/\d+)?", t):
            return Const(Fraction(t))
        return _atom_name(t, argname)

    e = read()
    if pos != len(toks):
        raise ParseError("trailing tokens after expression")
    return e


def parse_expr(text: str, argname: str = "x") -> Expr:
    """Parse infix ('0.2/x^2', 'fNC(1,0.3)') or prefix ('(pow q (neg 2))') syntax."""
    # prefix heads are always followed by whitespace: "(log x)" but not "(log(x) - 1)"
    m = re.match(r"\s*\(\s*([A-Za-z_][A-Za-z_0-9]*)\s", text)
    if m and m.group(1) in _PREFIX_OPS:
        return _parse_prefix(text, argname)
    p = _Infix(_tokens(text), argname)
    e = p.expr()
    if p.i != len(p.toks):
        raise ParseError(f"trailing input at token {p.toks[p.i][1]!r}")
    return e


def parse_psi(text: str, d: int | None = None) -> PsiSpec:
    """'power:ALPHA', 'family:N,C' (needs d) or 'custom:EXPR' in q."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "power":
        rest = rest.strip()
        try:
            return PowerLaw(Fraction(rest))
        except ValueError:
            return PowerLaw(parse_expr(rest))
    if kind == "family":
        if d is None:
            raise ParseError("family psi needs a dimension")
        n, c = (s.strip() for s in rest.split(","))
        return psi_NC(d, int(n), Fraction(c))
    if kind == "custom":
        return Custom(parse_expr(rest, "q"))
    raise ParseError(f"unknown psi kind {kind!r}")
