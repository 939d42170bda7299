"""Dirichlet decisions and empirical approximation constants.

For H_max in dimension d >= 3, psi is Dirichlet exactly when f_psi (eventually
nonnegative) is not recursively integrable.  For H_min, H_prod and H_max with
d <= 2 the uniform statement is checked by playing the variance-descent
adversary.  The estimators enumerate tuples of per-coordinate convergents,
which lose at most constant factors against all rationals.
"""
from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np
from scipy.optimize import minimize_scalar

from .cfrac import ContinuedFraction, PrecisionExhausted, convergents, expand_rational, expand_real
from .dataprog import DataProgression, cost, point_from_progression, random_play
from .funexpr import (BigPsi, DomainError, FamilyNC, FPsi, PowerLaw, PsiSpec, Scaled,
                      UnsupportedDimension, psi_alpha_d, psi_NC, validate_psi_hypotheses)
from .heights import HeightKind, alpha_d, beta_d, gamma_d, height_of_denominators
from .recint import RecIntDecision, Verdict, _sign_screen, decide_rr, integer_values


class DVerdict(str, enum.Enum):
    DIRICHLET = "Dirichlet"
    NOT_DIRICHLET = "NotDirichlet"
    UNDETERMINED = "Undetermined"


class NotRecursivelyIntegrable(ValueError):
    """The construction needs f_psi in RR, and the decider says otherwise."""


@dataclass
class DirichletVerdict:
    verdict: DVerdict
    basis: RecIntDecision | None
    nonnegativity: dict
    reason: str = ""
    cross_check: "DirichletVerdict | None" = None

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict.value, "reason": self.reason,
               "nonnegativity": self.nonnegativity,
               "basis": self.basis.to_dict() if self.basis else None}
        if self.cross_check is not None:
            out["cross_check"] = self.cross_check.verdict.value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=str)


_FROM_RR = {Verdict.IN_RR: DVerdict.NOT_DIRICHLET, Verdict.NOT_IN_RR: DVerdict.DIRICHLET,
            Verdict.UNDETERMINED: DVerdict.UNDETERMINED}


def dirichlet_decide(psi: PsiSpec, d: int, *, horizon: float = 1e6, sign_window: float = 1e6,
                     **rr_kwargs) -> DirichletVerdict:
    """Decide whether psi is Dirichlet for H_max on R^d (d >= 3) through f_psi.

    f_psi eventually negative puts psi below the psi_{alpha_d} scale, where
    it is not Dirichlet by comparison.
    """
    if d < 3:
        raise UnsupportedDimension("use minprod_uniform_check for d <= 2")
    hyp = validate_psi_hypotheses(psi)
    if not hyp.ok:
        raise DomainError(f"Psi is not increasing on {hyp.window}: {hyp.violations[:3]}")
    f = FPsi(psi, d)
    x_lo = max(1.0, 2.0 * f.domain_lo) if f.domain_lo > 0 else 1.0
    sign, start = _sign_screen(f, x_lo, sign_window)
    nonneg = {"sign": sign, "window": [x_lo, sign_window], "positive_from": start}
    if sign == "nonpositive":
        return DirichletVerdict(DVerdict.NOT_DIRICHLET, None, nonneg,
                                "f_psi eventually <= 0: psi decays at least like psi_{alpha_d}")
    if sign == "mixed":
        return DirichletVerdict(DVerdict.UNDETERMINED, None, nonneg, "f_psi changes sign on the window")
    dec = decide_rr(f, "both", horizon=horizon, **rr_kwargs)
    return DirichletVerdict(_FROM_RR[dec.verdict], dec, nonneg,
                            f"f_psi {'in' if dec.verdict is Verdict.IN_RR else 'not in'} RR"
                            if dec.verdict.decisive else "recursive integrability undetermined")


def family_reduction(d: int, N: int, C) -> tuple:
    """f_{psi_{N,C}}(x) = log^2(gamma_d) f_{N-2,C/4}(x log gamma_d), as (scaled, unscaled)."""
    inner = FamilyNC(N - 2, Fraction(C) / 4)
    lam = mpmath.log(gamma_d(d))
    return Scaled(inner, lam), inner


def dirichlet_decide_family(d: int, N: int, C, *, cross_check: bool = True,
                            identity_points=(10.0, 1e3, 1e5)) -> DirichletVerdict:
    """Decide psi_{N,C} through the reduction to f_{N-2,C/4}.

    The identity is checked numerically at a few points before use, scaling is
    dropped (it preserves membership), and the remaining family member is
    decided by the structural reduction chain.
    """
    if d < 3:
        raise UnsupportedDimension("psi_{N,C} needs d >= 3")
    if N < 1:
        raise ValueError("need N >= 1")
    C = Fraction(C).limit_denominator(10**12) if isinstance(C, float) else Fraction(C)
    psi = psi_NC(d, N, C)
    f = FPsi(psi, d)
    scaled, inner = family_reduction(d, N, C)
    for x in identity_points:
        if x <= max(f.domain_lo, scaled.domain_lo):
            continue
        a, b = f(x), scaled(x)
        if abs(a - b) > 1e-12 * max(abs(a), abs(b), mpmath.mpf(2) ** -300):
            raise AssertionError(f"family identity fails at x={x}: {a} vs {b}")
    dec = decide_rr(inner, "both")
    out = DirichletVerdict(_FROM_RR[dec.verdict], dec, {"sign": "positive", "structural": True},
                           f"reduces to f_({N - 2},{C / 4})")
    if cross_check:
        gen = dirichlet_decide(psi, d)
        out.cross_check = gen
        if gen.verdict is not DVerdict.UNDETERMINED and out.verdict is not DVerdict.UNDETERMINED \
                and gen.verdict is not out.verdict:
            raise AssertionError(f"structural {out.verdict} disagrees with generic {gen.verdict}")
    return out


# ---------------------------------------------------------------------------
# uniform statements and the geometric optimum


@dataclass
class UniformReport:
    kind: str
    d: int
    trials: int
    all_died: bool
    max_k_steps: int
    max_budget: int
    max_length: int
    equal_start_moves: int


def minprod_uniform_check(kind: HeightKind | str, d: int, trials: int = 1000, seed: int = 0,
                          max_steps: int = 10**4) -> UniformReport:
    """Random adversary plays must all run out of legal moves within the variance budget."""
    kind = HeightKind.parse(kind)
    beta_d(kind, d)  # rejects MAX with d > 2
    rng = random.Random(seed)
    plays = [random_play(kind, d, rng, max_steps=max_steps) for _ in range(trials)]
    immortal = [p for p in plays if not p.died]
    if immortal:
        raise AssertionError(f"{len(immortal)} plays still had legal moves after {max_steps} steps")
    eq = random_play(kind, d, rng, start=[Fraction(10)] * d)
    return UniformReport(kind.value, d, trials, True,
                         max(p.report.n_k_steps for p in plays), max(p.report.budget for p in plays),
                         max(len(p.states) for p in plays), len(eq.states) - 1)


@dataclass
class GammaReport:
    d: int
    argmax_grid: float
    max_grid: float
    argmax: float
    max_value: float
    gamma_d: float
    alpha_d: float
    argmin_sum: float
    min_sum: float
    unique_on_grid: bool
    grid_step: float


def gamma_optimum_check(d: int, grid=None) -> GammaReport:
    """Maximize f_d(gamma) = (alpha_d - gamma) gamma^(d-1) and minimize gamma + gamma^-(d-1)."""
    if d < 3:
        raise ValueError("need d >= 3")
    a, g = float(alpha_d(d)), float(gamma_d(d))
    if grid is None:
        grid = np.arange(1.001, 3.0 + 1e-12, 1e-3)
    grid = np.asarray(grid, dtype=float)
    step = float(np.max(np.diff(grid))) if len(grid) > 1 else 0.0
    fd = (a - grid) * grid ** (d - 1)
    j = int(np.argmax(fd))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    res = minimize_scalar(lambda t: -(a - t) * t ** (d - 1), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    sums = grid + grid ** (-(d - 1))
    k = int(np.argmin(sums))
    res2 = minimize_scalar(lambda t: t + t ** (-(d - 1)),
                           bounds=(grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]),
                           method="bounded", options={"xatol": 1e-12})
    unique = bool(np.all(fd[np.abs(grid - g) > 1e-15] < 1.0))
    return GammaReport(d, float(grid[j]), float(fd[j]), float(res.x), float(-res.fun), g, a,
                       float(res2.x), float(res2.fun), unique, step)


# ---------------------------------------------------------------------------
# estimators over convergent tuples


@dataclass
class _Coordinate:
    pq: list          # convergents (p, q) with q <= Q, excluding an exact hit
    err: list         # |x - p/q| as mpf

    @property
    def qs(self):
        return [q for _, q in self.pq]


def _coordinate(x, Q: int | None, precision: int | None) -> _Coordinate:
    """Convergents of one coordinate with q <= Q and their errors.

    x may be a Fraction, int, ContinuedFraction or certified real.  For exact
    inputs the final convergent (zero error) is dropped.
    """
    if isinstance(x, ContinuedFraction):
        x = x.value()
    if isinstance(x, (int, Fraction)):
        x = Fraction(x)
        cs = convergents(expand_rational(x))[:-1]
        if Q is not None:
            cs = [c for c in cs if c.q <= Q]
        bits = precision or 2 * max([c.q for c in cs] + [2]).bit_length() + 64
        with mpmath.workprec(bits):
            errs = [mpmath.mpf(abs(x - Fraction(c.p, c.q)).numerator) / abs(x - Fraction(c.p, c.q)).denominator
                    for c in cs]
        return _Coordinate([(c.p, c.q) for c in cs], errs)
    if Q is None:
        raise ValueError("a height bound is needed for non-terminating coordinates")
    bits = precision or 2 * int(Q).bit_length() + 128
    depth = 16
    while True:
        try:
            cf = expand_real(x, depth, bits)
        except PrecisionExhausted:
            bits *= 2
            continue
        cs = convergents(cf)
        if cs[-1].q > Q or depth > 4 * bits:
            break
        depth *= 2
    cs = [c for c in cs if c.q <= Q]
    from .cfrac import interval_context
    ctx = interval_context(bits)
    iv = ctx.convert(x(ctx))
    with mpmath.workprec(bits):
        mid = mpmath.mpf(iv.mid)
        errs = [abs(mid - mpmath.mpf(c.p) / c.q) for c in cs]
    return _Coordinate([(c.p, c.q) for c in cs], errs)


@dataclass(frozen=True)
class ApproximationRecord:
    r: tuple
    height: int
    error: object
    ratio: object


def _candidates(coords: list[_Coordinate], kind: HeightKind, Q: int | None):
    import itertools
    idx = [range(len(c.pq)) for c in coords]
    for combo in itertools.product(*idx):
        qs = [coords[j].pq[n][1] for j, n in enumerate(combo)]
        if kind is HeightKind.MIN and any(n == 0 for n in combo) and len(coords) > 1:
            # integer coordinates give H_min = 1 without converging to x
            continue
        H = height_of_denominators(kind, qs)
        if H < 1 or (Q is not None and H > Q):
            continue
        err = max(coords[j].err[n] for j, n in enumerate(combo))
        if err == 0:
            continue
        r = tuple(Fraction(*coords[j].pq[n]) for j, n in enumerate(combo))
        yield r, H, err


@dataclass
class CEstimate:
    estimate: object
    record: ApproximationRecord
    window: tuple
    running_min: list           # (H, running min over all candidates with height <= H)
    global_min: object

    def to_csv(self) -> str:
        return "Q,C_running_min\n" + "".join(f"{H},{float(v):.17g}\n" for H, v in self.running_min)


def estimate_C(x: Sequence, kind: HeightKind | str, psi: PsiSpec, Q_max: int | None = None,
               precision: int | None = None) -> CEstimate:
    """min over candidates of ||x - r|| / psi(H(r)).

    The headline estimate is the minimum over heights in [Q^(1/2), Q], which
    keeps small-height outliers from dominating an asymptotic quantity; the
    running minimum over all heights is reported alongside.
    """
    kind = HeightKind.parse(kind)
    Q = int(Q_max) if Q_max is not None else None
    coords = [_coordinate(c, Q, precision) for c in x]
    cands = list(_candidates(coords, kind, Q))
    if not cands:
        raise ValueError("no candidates within the height bound")
    top = Q or max(H for _, H, _ in cands)
    lo = math.isqrt(top)
    recs = []
    bits = precision or 2 * top.bit_length() + 64
    with mpmath.workprec(bits):
        for r, H, err in cands:
            recs.append(ApproximationRecord(r, H, err, err / psi(H, bits)))
    recs.sort(key=lambda t: t.height)
    run, cur = [], None
    for t in recs:
        cur = t.ratio if cur is None else min(cur, t.ratio)
        if run and run[-1][0] == t.height:
            run[-1] = (t.height, cur)
        else:
            run.append((t.height, cur))
    tail = [t for t in recs if t.height >= lo] or recs
    best = min(tail, key=lambda t: t.ratio)
    return CEstimate(best.ratio, best, (lo, top), run, run[-1][1])


@dataclass
class OmegaEstimate:
    estimate: float
    window_max: float
    window: tuple
    n_candidates: int
    n_records: int

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "window_max": self.window_max, "window": list(self.window),
                "n_candidates": self.n_candidates, "n_records": self.n_records}


def estimate_omega(x: Sequence, kind: HeightKind | str, Q_max: int | None = None,
                   precision: int | None = None) -> OmegaEstimate:
    """Growth rate of -log||x - r|| against log H(r) along record approximations.

    Candidates are sorted by height and those improving on every smaller
    height are kept; the estimate is the least-squares slope of
    -log err against log H over them.  The plain maximum of the ratio over
    H in [Q^(1/2), Q] is reported as window_max.
    """
    kind = HeightKind.parse(kind)
    Q = int(Q_max) if Q_max is not None else None
    coords = [_coordinate(c, Q, precision) for c in x]
    cands = [(H, err) for _, H, err in _candidates(coords, kind, Q) if H >= 2]
    if len(cands) < 2:
        raise ValueError("too few candidates")
    top = Q or max(H for H, _ in cands)
    lo = math.isqrt(top)
    pts = sorted((math.log(H), float(-mpmath.log(err))) for H, err in cands)
    recs, best = [], -math.inf
    for lh, le in pts:
        if le > best:
            recs.append((lh, le))
            best = le
    X, Y = np.array(recs).T
    slope = float(np.polyfit(X, Y, 1)[0]) if len(recs) >= 2 else float(Y[0] / X[0])
    win = [le / lh for lh, le in pts if math.log(lo) <= lh <= math.log(top)]
    return OmegaEstimate(slope, max(win) if win else float("nan"), (lo, top), len(cands), len(recs))


# ---------------------------------------------------------------------------
# the worst-case point for H_max


@dataclass
class BadPoint:
    x: list
    progression: DataProgression
    construction: object
    S: list
    C1: float
    k0: int
    cost_min: object
    log: list = field(default_factory=list)


def build_bad_point_for_max(d: int, N_terms: int, psi: PsiSpec | None = None, *, C1: float = 8.0,
                            k0: int | None = None, A_start=None, escalations: int = 3,
                            decide: bool = True) -> BadPoint:
    """Point whose H_max approximations are as poor as psi allows.

    Runs S_{k+1} = S_k - S_k^2 - C1 S_k^3 - f_psi(k) - C1/k^3 from
    S_{k0} = 1/max(5, C1+1), sets A_{k+1} = A_k gamma_d (1 + S_k) and
    i_k = (k mod d) + 1, and turns the progression into a point.  C1 and k0
    are escalated when the sequence turns negative or the cost goes below 0.
    """
    if d < 3:
        raise UnsupportedDimension("the construction is for d >= 3")
    psi = psi or psi_alpha_d(d)
    f = FPsi(psi, d)
    log = []
    if decide:
        x_lo = max(1.0, 2.0 * f.domain_lo) if f.domain_lo > 0 else 1.0
        sign, _ = _sign_screen(f, x_lo, 1e6)
        log.append(f"f_psi sign on tail: {sign}")
        if sign == "positive":
            dec = decide_rr(f, "both")
            log.append(f"f_psi: {dec.verdict.value}")
            if dec.verdict is Verdict.NOT_IN_RR:
                raise NotRecursivelyIntegrable("f_psi is not in RR; no bad point exists for this psi")
    g = gamma_d(d)
    BigP = BigPsi(psi)
    for attempt in range(escalations + 1):
        kk0 = k0 or max(int(math.ceil(4 * C1)), int(f.domain_lo) + 2)
        S0 = 1.0 / max(5.0, C1 + 1.0)
        fv = [float(v) for v in _fpsi_values(f, kk0, kk0 + N_terms)]
        S, seq = S0, [S0]
        ok = True
        for j in range(N_terms):
            k = kk0 + j
            S = S - S * S - C1 * S**3 - fv[j] - C1 / k**3
            if S < 0:
                ok = False
                break
            seq.append(S)
        if not ok:
            log.append(f"S negative at k={kk0 + len(seq)} with C1={C1}, k0={kk0}; escalating")
            k0 = 2 * kk0
            continue
        A0 = A_start if A_start is not None else (mpmath.mpf(1) if isinstance(psi, PowerLaw) else g**kk0)
        As = [mpmath.mpf(A0)]
        for s in seq[:N_terms]:
            As.append(As[-1] * g * (1 + mpmath.mpf(s)))
        entries = [(As[j], (kk0 + j) % d + 1) for j in range(len(As))]
        prog = DataProgression(d, entries)
        rep = cost(prog, "max", lambda b: BigP(b), len(As) - 1)
        log.append(f"C1={C1}, k0={kk0}: min cost {float(rep.estimate):.3g}")
        if rep.estimate >= 0:
            pc = point_from_progression(prog, N_terms)
            return BadPoint(pc.point, prog, pc, seq, C1, kk0, rep.estimate, log)
        C1 *= 2
    raise ArithmeticError("construction failed after escalation: " + "; ".join(log))


def _fpsi_values(f, lo: int, hi: int):
    out = []
    for k in range(lo, hi + 1):
        out.append(f(k))
    return out
