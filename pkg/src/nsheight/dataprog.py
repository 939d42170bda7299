"""Data progressions: the log-scale shadow of a point's convergent denominators.

A progression is a sequence of pairs (A_k, i_k), k >= 1.  Its state is the
vector b_k in which coordinate i_k is overwritten by A_{k+1} when passing to
b_{k+1}; all other coordinates are carried over.  States are only defined
once every coordinate has been written.
"""
from __future__ import annotations

import enum
import io
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath

from .cfrac import ContinuedFraction, convergents, denominators_to_cf
from .heights import HeightKind


class UndefinedState(ValueError):
    """A coordinate of the requested state has never been written."""


class InvalidProgression(ValueError):
    pass


class XiKind(enum.Enum):
    MAX = "max"
    MIN = "min"
    SUM = "sum"

    @classmethod
    def parse(cls, s) -> "XiKind":
        if isinstance(s, XiKind):
            return s
        if isinstance(s, HeightKind):
            return cls.of_height(s)
        s = s.lower()
        return cls.SUM if s == "prod" else cls(s)

    @classmethod
    def of_height(cls, kind: HeightKind) -> "XiKind":
        table = {HeightKind.MAX: cls.MAX, HeightKind.MIN: cls.MIN, HeightKind.PROD: cls.SUM}
        if kind not in table:
            raise ValueError(f"no log-scale combiner for {kind}")
        return table[kind]

    def __call__(self, b: Sequence):
        if self is XiKind.MAX:
            return max(b)
        if self is XiKind.MIN:
            return min(b)
        return sum(b)


class Trend(str, enum.Enum):
    NEG_INF = "-inf"
    ZERO = "0"
    POS_INF = "+inf"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class ProgressionState:
    k: int
    b: tuple


class DataProgression:
    """Entries (A_k, i_k) for k = 1, 2, ..., with i_k in 1..d.

    Either an eager list or a callback k -> (A_k, i_k) that is materialized
    lazily and memoized.
    """

    def __init__(self, d: int, entries: Iterable | None = None,
                 generator: Callable[[int], tuple] | None = None):
        if d < 1:
            raise ValueError("dimension must be positive")
        if entries is None and generator is None:
            raise ValueError("need entries or a generator")
        self.d = d
        self._entries: list = []
        self._gen = generator
        for A, i in entries or ():
            self._append(A, i)

    def _append(self, A, i):
        i = int(i)
        if not 1 <= i <= self.d:
            raise InvalidProgression(f"index {i} outside 1..{self.d}")
        self._entries.append((A, i))

    def materialize(self, K: int) -> None:
        while len(self._entries) < K:
            if self._gen is None:
                raise IndexError(f"progression has only {len(self._entries)} entries")
            self._append(*self._gen(len(self._entries) + 1))

    def __len__(self):
        return len(self._entries)

    @property
    def finite(self) -> bool:
        return self._gen is None

    def entry(self, k: int) -> tuple:
        if k < 1:
            raise IndexError("entries are indexed from 1")
        self.materialize(k)
        return self._entries[k - 1]

    def A(self, k: int):
        return self.entry(k)[0]

    def i(self, k: int) -> int:
        return self.entry(k)[1]

    def entries(self, K: int | None = None) -> list:
        if K is not None:
            self.materialize(K)
            return self._entries[:K]
        return list(self._entries)

    def to_json(self, K: int | None = None) -> str:
        ents = [[_num(A), i] for A, i in self.entries(K)]
        return json.dumps({"d": self.d, "entries": ents})

    @classmethod
    def from_json(cls, text: str) -> "DataProgression":
        obj = json.loads(text)
        return cls(int(obj["d"]), [(A, i) for A, i in obj["entries"]])


def _num(v):
    if isinstance(v, Fraction):
        return float(v) if v.denominator != 1 else v.numerator
    if isinstance(v, mpmath.mpf):
        return float(v)
    return v


def warmup(prog: DataProgression, limit: int = 10**6) -> int:
    """First k at which b_k is fully defined."""
    seen = set()
    for k in range(1, limit):
        if len(seen) == prog.d:
            return k
        seen.add(prog.i(k))
    raise UndefinedState(f"some coordinate is never written within {limit} steps")


def state_seq(prog: DataProgression, k_range: range | tuple) -> list[ProgressionState]:
    """States b_k for k in k_range via b_{k+1}^(i) = A_{k+1} if i = i_k else b_k^(i)."""
    if not isinstance(k_range, range):
        k_range = range(k_range[0], k_range[1] + 1)
    if len(k_range) == 0:
        return []
    b: list = [None] * prog.d
    out = []
    for k in range(1, k_range[-1] + 1):
        if k >= k_range[0]:
            if any(v is None for v in b):
                missing = [j + 1 for j, v in enumerate(b) if v is None]
                raise UndefinedState(f"coordinates {missing} undefined at k={k}")
            out.append(ProgressionState(k, tuple(b)))
        b[prog.i(k) - 1] = prog.A(k + 1)
    return out


@dataclass
class ValidationReport:
    k_start: int
    K: int
    window: int
    indices_seen: set
    growth_ok: bool
    unbounded_ok: bool

    @property
    def ok(self) -> bool:
        return self.growth_ok and self.unbounded_ok and len(self.indices_seen) == 0


def validate(prog: DataProgression, K: int = 200, window: int | None = None, strict: bool = True) -> ValidationReport:
    """Check all indices occur, strict growth of the written coordinate, and unbounded max.

    Unboundedness is checked as: max(b_k) increases within every window of
    length W (default 8d).
    """
    W = window or 8 * prog.d
    k0 = warmup(prog)
    K = max(K, k0 + W + 1)
    if prog.finite:
        K = min(K, len(prog) - 1)
    states = state_seq(prog, range(k0, K + 1))
    missing = set(range(1, prog.d + 1)) - {prog.i(k) for k in range(1, K + 1)}
    growth = all(prog.A(s.k + 1) > s.b[prog.i(s.k) - 1] for s in states)
    maxes = [max(s.b) for s in states]
    unbounded = all(maxes[j + W] > maxes[j] for j in range(len(maxes) - W))
    rep = ValidationReport(k0, K, W, missing, growth, unbounded)
    if strict and not rep.ok:
        raise InvalidProgression(
            f"growth={growth} unbounded={unbounded} missing={sorted(missing)}")
    return rep


# ---------------------------------------------------------------------------
# cost functional


@dataclass
class CostReport:
    estimate: object
    argmin: int
    values: list
    trend: Trend

    def to_csv(self, prog: DataProgression) -> str:
        buf = io.StringIO()
        d = prog.d
        buf.write("k," + ",".join(f"b{j}" for j in range(1, d + 1)) + ",cost\n")
        states = {s.k: s for s in state_seq(prog, range(self.values[0][0], self.values[-1][0] + 1))}
        for k, v in self.values:
            b = ",".join(f"{float(x):.17g}" for x in states[k].b)
            buf.write(f"{k},{b},{float(v):.17g}\n")
        return buf.getvalue()


def classify_trend(values: Sequence, scale: Sequence, rel_tol: float = 1e-9) -> Trend:
    """Tail behaviour over the last quarter of the window.

    ZERO when every term is negligible against the matching scale, otherwise
    a sign-definite, monotonically growing tail diverges to that sign.
    """
    n = max(2, len(values) // 4)
    tail = [float(v) for v in values[-n:]]
    sc = [abs(float(s)) for s in scale[-n:]]
    if all(abs(v) <= rel_tol * max(s, 1.0) for v, s in zip(tail, sc)):
        return Trend.ZERO
    if all(v > 0 for v in tail) and all(b >= a for a, b in zip(tail, tail[1:])):
        return Trend.POS_INF
    if all(v < 0 for v in tail) and all(b <= a for a, b in zip(tail, tail[1:])):
        return Trend.NEG_INF
    return Trend.UNDETERMINED


def cost_terms(prog: DataProgression, xi: XiKind | str, Psi: Callable, K: int, k_start: int | None = None) -> list:
    """Per-step Psi(Xi(b_k)) - b_k^(i_k) - b_{k+1}^(i_k) for k = k_start..K."""
    xi = XiKind.parse(xi)
    k_start = k_start or warmup(prog)
    out = []
    for s in state_seq(prog, range(k_start, K + 1)):
        i = prog.i(s.k)
        out.append((s.k, Psi(xi(s.b)) - s.b[i - 1] - prog.A(s.k + 1)))
    return out


def cost(prog: DataProgression, xi: XiKind | str, Psi: Callable, K: int, k_start: int | None = None) -> CostReport:
    """Running-min estimate of the liminf cost, plus a tail-trend classification."""
    vals = cost_terms(prog, xi, Psi, K, k_start)
    if not vals:
        raise ValueError("empty cost window")
    k_min, v_min = min(vals, key=lambda kv: kv[1])
    trend = classify_trend([v for _, v in vals], [prog.A(k) for k, _ in vals])
    return CostReport(v_min, k_min, vals, trend)


# ---------------------------------------------------------------------------
# periodic geometric progressions


def periodic_geometric(d: int, gamma) -> DataProgression:
    """A_k = gamma^k, i_k = ((k-1) mod d) + 1."""
    if d < 2:
        raise ValueError("need d >= 2")
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    return DataProgression(d, generator=lambda k: (gamma**k, (k - 1) % d + 1))


def periodic_cost_closed_form(d: int, gamma, alpha, k: int):
    """(alpha - gamma^-(d-1) - gamma) gamma^k, the per-step cost for Psi = alpha*id, Xi = max."""
    return (alpha - gamma ** (-(d - 1)) - gamma) * gamma**k


def classify_periodic_geometric(d: int, gamma, alpha, rel_tol: float = 1e-12) -> Trend:
    if not gamma > 1 or alpha < 0:
        raise ValueError("need gamma > 1 and alpha >= 0")
    s = alpha - gamma - gamma ** (-(d - 1))
    if abs(s) <= rel_tol * max(1.0, abs(float(alpha))):
        return Trend.ZERO
    return Trend.POS_INF if s > 0 else Trend.NEG_INF


# ---------------------------------------------------------------------------
# point <-> progression


def progression_from_point(xs: Sequence[ContinuedFraction], depth: int | None = None) -> DataProgression:
    """Merge the coordinates' convergent pairs by q_n q_{n+1}.

    The k-th pair (m_k, i_k) in that order gives A_{k+1} = log q_{m_k+1}^(i_k);
    then b_k^(i_k) = log q_{m_k}^(i_k) once coordinate i_k has been seen.
    Pairs are kept only up to the smallest key at which some coordinate runs
    out, so the order is that of the infinite merge.
    """
    qss = []
    for cf in xs:
        qs = [c.q for c in convergents(cf)]
        if depth is not None:
            if len(qs) < depth + 1:
                raise ValueError(f"need {depth + 1} convergents, have {len(qs)}")
            qs = qs[: depth + 1]
        qss.append(qs)
    items = []
    for i, qs in enumerate(qss, start=1):
        items += [(qs[n] * qs[n + 1], i, n) for n in range(len(qs) - 1)]
    cap = min(qs[-2] * qs[-1] for qs in qss if len(qs) >= 2)
    items = sorted(t for t in items if t[0] <= cap)
    entries = [(mpmath.mpf(0), items[0][1])]
    for k, (_, i, m) in enumerate(items, start=1):
        A_next = mpmath.log(qss[i - 1][m + 1])
        if k < len(items):
            entries.append((A_next, items[k][1]))
        else:
            entries.append((A_next, i))
    return DataProgression(len(xs), entries)


def merge_keys(prog: DataProgression, K: int) -> list:
    """exp(b_k^(i_k) + b_{k+1}^(i_k)); nondecreasing for progressions built from points."""
    k0 = warmup(prog)
    return [mpmath.exp(s.b[prog.i(s.k) - 1] + prog.A(s.k + 1)) for s in state_seq(prog, range(k0, K + 1))]


@dataclass
class PointConstruction:
    coords: list[ContinuedFraction]
    milestones: list[list]
    targets: list[list[int]]
    bumped: list[int]
    rational: list[bool]
    sandwich_ok: bool

    @property
    def point(self) -> list[Fraction]:
        return [cf.value() for cf in self.coords]


def point_from_progression(prog: DataProgression, n_terms: int, precision: int | None = None,
                           max_steps: int = 10**5) -> PointConstruction:
    """Thin each coordinate's b-sequence to log 2 separated milestones, then fit denominators.

    Targets are 1 followed by ceil(exp(b)) at the milestones (bumped to twice
    the previous target where the doubling condition would fail), and the
    greedy continued fraction gives target/2 <= q_n <= target.
    """
    d = prog.d
    k0 = warmup(prog)
    log2 = math.log(2)
    miles = [[] for _ in range(d)]
    last = [None] * d
    k = k0
    b: list | None = None
    for s in state_seq(prog, range(k0, k0 + 1)):
        b = list(s.b)
    while k < max_steps and min(len(m) for m in miles) < n_terms:
        for j in range(d):
            if len(miles[j]) < n_terms and (last[j] is None or b[j] >= last[j] + log2):
                miles[j].append(b[j])
                last[j] = b[j]
        if prog.finite and k + 1 >= len(prog):
            break
        b[prog.i(k) - 1] = prog.A(k + 1)
        k += 1
    coords, targets, bumped, rational = [], [], [], []
    ok = True
    for j in range(d):
        ms = miles[j]
        top = max([float(m) for m in ms] + [1.0])
        prec = precision or int(top * 1.4427) + 64
        ts, nb = [1], 0
        with mpmath.workprec(prec):
            for m in ms:
                e = mpmath.exp(mpmath.mpf(m))
                t = int(mpmath.nint(e)) if abs(e - mpmath.nint(e)) < 1e-9 * e else int(mpmath.ceil(e))
                if t < 2 * ts[-1]:
                    t, nb = 2 * ts[-1], nb + 1
                ts.append(t)
        cf = denominators_to_cf(ts)
        qs = [c.q for c in convergents(cf)][1:]
        with mpmath.workprec(prec):
            for q, m, t in zip(qs, ms, ts[1:]):
                e = mpmath.exp(mpmath.mpf(m))
                if t <= e + 1 and not (e / 2 * (1 - 1e-9) <= q <= 2 * e):
                    ok = False
        coords.append(cf)
        targets.append(ts)
        bumped.append(nb)
        rational.append(len(ms) < n_terms)
    return PointConstruction(coords, miles, targets, bumped, rational, ok)


# ---------------------------------------------------------------------------
# the variance-descent adversary


class MoveResult(str, enum.Enum):
    ACCEPTED = "Accepted"
    INFEASIBLE = "Infeasible"


def variance(b: Sequence):
    n = len(b)
    m = sum(b) / n
    return sum((x - m) ** 2 for x in b) / n


def adversary_bound(kind: HeightKind | str, beta, b: Sequence, i: int):
    """Largest admissible A for a move on coordinate i (1-based): beta*Xi(b) - 1 - b_i."""
    xi = XiKind.of_height(HeightKind.parse(kind))
    return beta * xi(b) - 1 - b[i - 1]


def adversary_step(kind: HeightKind | str, beta, state: Sequence, proposal: tuple) -> MoveResult:
    """Accept (A, i) iff b_i + A <= beta*Xi(b) - 1; the move must increase coordinate i."""
    A, i = proposal
    if not A > state[i - 1]:
        raise ValueError("proposed move does not increase the coordinate")
    return MoveResult.ACCEPTED if A <= adversary_bound(kind, beta, state, i) else MoveResult.INFEASIBLE


def feasible_moves(kind, beta, b: Sequence) -> list[tuple[int, object, object]]:
    """(i, lo, hi) with the open-closed interval (lo, hi] of legal values for coordinate i."""
    out = []
    for i in range(1, len(b) + 1):
        hi = adversary_bound(kind, beta, b, i)
        if hi > b[i - 1]:
            out.append((i, b[i - 1], hi))
    return out


@dataclass
class VarianceReport:
    variances: list
    decrements: list
    k_steps: list[int]
    budget: int
    ok: bool = True

    @property
    def n_k_steps(self) -> int:
        return len(self.k_steps)


def variance_descent_report(play: Sequence[Sequence], strict: bool = True) -> VarianceReport:
    """Check Var never increases and drops by >= 1/max(4, d) whenever max(b) grows.

    ``play`` is the sequence of states visited.  The budget
    ceil(Var(first)*max(4, d)) bounds the number of max-increasing steps.
    """
    d = len(play[0])
    m = max(4, d)
    vs = [variance(b) for b in play]
    decs = [a - b for a, b in zip(vs, vs[1:])]
    ks = [j for j in range(len(play) - 1) if max(play[j + 1]) > max(play[j])]
    ok = all(x >= 0 for x in decs) and all(decs[j] >= Fraction(1, m) for j in ks)
    budget = math.ceil(vs[0] * m)
    ok = ok and len(ks) <= budget
    if strict and not ok:
        raise AssertionError(f"variance descent violated: decrements={decs}, K={ks}, budget={budget}")
    return VarianceReport(vs, decs, ks, budget, ok)


@dataclass
class PlayResult:
    states: list
    died: bool
    report: VarianceReport


def random_play(kind, d: int, rng: random.Random, start: Sequence | None = None,
                spread: int = 20, max_steps: int = 10**4) -> PlayResult:
    """Play random legal moves (exact rationals) until none remains.

    Moves that raise max(b) are preferred when available, since those are the
    ones the variance budget limits.
    """
    kind = HeightKind.parse(kind)
    from .heights import beta_d
    beta = beta_d(kind, d)
    if start is None:
        start = [Fraction(rng.randint(0, spread * 100), 100) for _ in range(d)]
    b = [Fraction(x) for x in start]
    states = [tuple(b)]
    died = False
    for _ in range(max_steps):
        moves = feasible_moves(kind, beta, b)
        if not moves:
            died = True
            break
        top = max(b)
        growing = [m for m in moves if m[2] > top]
        if growing and rng.random() < 0.5:
            i, lo, hi = growing[rng.randrange(len(growing))]
            lo = max(lo, top)
        else:
            i, lo, hi = moves[rng.randrange(len(moves))]
        # the extreme move is taken often enough that shrinking gaps close
        u = Fraction(1) if rng.random() < 0.25 else Fraction(rng.randint(1, 100), 100)
        A = lo + (hi - lo) * u
        assert adversary_step(kind, beta, b, (A, i)) is MoveResult.ACCEPTED
        b[i - 1] = A
        states.append(tuple(b))
    return PlayResult(states, died, variance_descent_report(states))
