"""Deciding recursive integrability.

f >= 0 is recursively integrable (in RR) when -g' = g^2 + f has a nonnegative
solution on some tail [t1, oo).  Two numerical certificates are offered: ODE
witness search and the backward recurrence S_k = S_{k+1} + S_{k+1}^2 + f(k)
whose value at k0 increases with the cut-off N.

Both certificates stall when x^2 f(x) tends to 1/4, because the decisive
behaviour then unfolds over log-scales far beyond any horizon.  decide_rr
handles that regime by peeling off the transform
F(x) = (1/x^2)[1/4 + f(log x)], which preserves membership, and deciding the
inner function instead.
"""
from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .funexpr import (Add, DomainError, EvaluationTooCostly, Expr, FamilyNC, LogTransform,
                      Scaled, f_NC, eventually_compare, inverse_log_transform)

QUARTER = 0.25
# x^2 f >= 1/4 + margin on the whole tail decides NotInRR by comparison with C/x^2
COMPARISON_MARGIN = 0.01
H0_GRID = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


class Verdict(str, enum.Enum):
    IN_RR = "InRR"
    NOT_IN_RR = "NotInRR"
    UNDETERMINED = "Undetermined"

    @property
    def decisive(self) -> bool:
        return self is not Verdict.UNDETERMINED


class NegativeFunction(DomainError):
    """f is negative on the tested tail, so the question is ill-posed."""


# ---------------------------------------------------------------------------
# the profile phi(s) = x^2 f(x), x = e^s


@dataclass
class Profile:
    s: np.ndarray
    phi: np.ndarray
    truncated: bool
    spline: CubicSpline = field(repr=False)

    @property
    def s_hi(self) -> float:
        return float(self.s[-1])

    def __call__(self, s):
        return self.spline(s)

    def tail(self, frac: float = 0.25) -> np.ndarray:
        n = max(2, int(len(self.s) * frac))
        return self.phi[-n:]

    def f_at(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return self.spline(np.log(k)) / (k * k)


def _phi_mp(f: Expr, s: float) -> float:
    v = f.at_log(s)
    return float(v * mpmath.exp(2 * mpmath.mpf(s)))


def _feasible(f: Expr, s: float) -> bool:
    try:
        _phi_mp(f, s)
        return True
    except EvaluationTooCostly:
        return False


@lru_cache(maxsize=64)
def _profile_cached(f: Expr, s_lo: float, s_hi: float, ds: float) -> Profile:
    truncated = False
    if not _feasible(f, s_hi):
        lo, hi = s_lo, s_hi
        if not _feasible(f, lo):
            raise EvaluationTooCostly(f"cannot evaluate {f} even at log-argument {s_lo}")
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if _feasible(f, mid) else (lo, mid)
        s_hi, truncated = lo, True
    n = max(16, int(math.ceil((s_hi - s_lo) / ds)) + 1)
    s = np.linspace(s_lo, s_hi, n)
    phi = None
    if f.has_float_path() and s_hi < 650:
        try:
            phi = np.exp(2 * s) * f.eval_array(np.exp(s))
        except DomainError:
            phi = None
    if phi is None:
        phi = np.array([_phi_mp(f, float(si)) for si in s])
    return Profile(s, phi, truncated, CubicSpline(s, phi))


def sample_profile(f: Expr, x_lo: float, x_hi: float, ds: float | None = None) -> Profile:
    """phi(s) = e^{2s} f(e^s) on [log x_lo, log x_hi], truncated where evaluation gets too costly."""
    s_lo, s_hi = math.log(x_lo), math.log(x_hi)
    if ds is None:
        ds = 0.004 if f.has_float_path() else 0.01
    return _profile_cached(f, round(s_lo, 12), round(s_hi, 12), ds)


# ---------------------------------------------------------------------------
# ODE witnesses


@dataclass
class OdeTrace:
    t1: float
    g0: float
    x: np.ndarray
    g: np.ndarray
    termination: str
    steps: int
    min_step: float
    residual_max: float
    x_neg: float | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,g\n")
        for xi, gi in zip(self.x, self.g):
            buf.write(f"{xi:.17g},{gi:.17g}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {"t1": self.t1, "g0": self.g0, "termination": self.termination,
                "steps": self.steps, "x_end": float(self.x[-1]), "g_end": float(self.g[-1]),
                "x_neg": self.x_neg, "residual_max": self.residual_max}


def _integrate(profile: Profile, s1: float, s_end: float, h0: float, tol: float):
    def rhs(s, h):
        return h - h * h - profile(s)

    def hit_zero(s, h):
        return h[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    return solve_ivp(rhs, (s1, s_end), [h0], method="RK45", rtol=tol, atol=tol * 1e-2,
                     events=hit_zero, dense_output=True, max_step=0.25)


def _trace_from(sol, profile, t1, g0) -> OdeTrace:
    s, h = sol.t, sol.y[0]
    x = np.exp(s)
    if sol.status == 1:
        termination, x_neg = "WentNegative", float(np.exp(sol.t_events[0][0]))
    elif sol.status == 0:
        termination, x_neg = "HorizonReached", None
    else:
        termination, x_neg = "StepUnderflow", None
    steps = np.diff(s)
    # residual of h' = h - h^2 - phi checked on the dense interpolant
    resid = 0.0
    if len(s) > 2 and sol.sol is not None:
        mids = 0.5 * (s[1:] + s[:-1])
        eps = 1e-6
        hm = sol.sol(mids)[0]
        dh = (sol.sol(np.minimum(mids + eps, s[-1]))[0] - sol.sol(np.maximum(mids - eps, s[0]))[0]) / (
            np.minimum(mids + eps, s[-1]) - np.maximum(mids - eps, s[0]))
        resid = float(np.max(np.abs(dh - (hm - hm * hm - profile(mids))) / np.maximum(1.0, np.abs(hm) ** 2)))
    return OdeTrace(t1, g0, x, h / x, termination, len(s) - 1,
                    float(steps.min()) if len(steps) else 0.0, resid, x_neg)


def ode_witness(f: Expr, t1: float, g0: float, horizon: float, tol: float = 1e-10,
                profile: Profile | None = None) -> OdeTrace:
    """Integrate -g' = g^2 + f from g(t1) = g0, stopping at the horizon or when g < 0.

    The integration runs in log-time on h = x g, where the equation reads
    dh/ds = h - h^2 - x^2 f(x); the trace reports g = h/x.
    """
    if g0 < 0:
        raise ValueError("g0 must be nonnegative")
    if profile is None:
        profile = sample_profile(f, min(t1, horizon), horizon)
    s1 = math.log(t1)
    if profile.phi[profile.s >= s1 - 1e-12].min() < 0:
        raise NegativeFunction("f takes negative values on [t1, horizon]")
    sol = _integrate(profile, s1, profile.s_hi, t1 * g0, tol)
    return _trace_from(sol, profile, t1, g0)


@dataclass
class RecIntDecision:
    verdict: Verdict
    method: str
    parameters: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)
    witness: OdeTrace | None = None
    level: int = 0
    chain: list = field(default_factory=list)

    def to_dict(self) -> dict:
        ev = dict(self.evidence)
        if self.witness is not None:
            ev["witness"] = self.witness.summary()
        if self.chain:
            ev["chain"] = self.chain
        return {"verdict": self.verdict.value, "method": self.method,
                "parameters": self.parameters, "evidence": ev}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, enum.Enum):
        return o.value
    return str(o)


def _default_t1_grid(f: Expr, horizon: float) -> tuple[float, ...]:
    base = max(1.0, 2.0 * f.domain_lo) if f.domain_lo > 0 else 1.0
    return tuple(t for t in (base, 4 * base, 16 * base) if t < horizon / 100) or (base,)


def decide_rr_ode(f: Expr, t1_grid=None, g0_grid=None, horizon: float = 1e6, *,
                  tol: float = 1e-10, escalations: int = 6, survival_factor: float = 2.0,
                  guard_tol: float = 1e-9, margin: float = COMPARISON_MARGIN) -> RecIntDecision:
    """Grid search for a surviving solution, or evidence that none exists.

    InRR needs a trace reaching the horizon with x g(x) bounded, and x^2 f(x)
    at most 1/4 on the last quarter of the window (below that level a
    surviving trace cannot be an artefact of slow drift).  NotInRR needs every
    trace to turn negative, with survival under repeated doubling of g0
    converging.  When x^2 f stays above 1/4 + margin on the tail, one t1 with
    converged blow-up suffices: later starts only outlive the window.
    """
    t1_grid = tuple(t1_grid or _default_t1_grid(f, horizon))
    profile = sample_profile(f, min(t1_grid), horizon)
    horizon_eff = math.exp(profile.s_hi)
    usable = tuple(t for t in t1_grid if t <= horizon_eff / 10)
    params = {"t1_grid": list(t1_grid), "horizon": horizon, "horizon_effective": horizon_eff,
              "tol": tol, "escalations": escalations, "survival_factor": survival_factor}
    tail_max = float(profile.tail().max())
    tail_min = float(profile.tail().min())
    if not usable:
        return RecIntDecision(Verdict.UNDETERMINED, "ode", params,
                              {"reason": "effective horizon too short for the t1 grid",
                               "tail_max_x2f": tail_max, "profile_truncated": profile.truncated})
    t1_grid = usable
    guard = tail_max <= QUARTER + guard_tol
    survivors, per_t1 = [], []
    all_dead = True
    some_dead = False
    for t1 in t1_grid:
        grid = tuple(g0_grid) if g0_grid else tuple(h / t1 for h in H0_GRID)
        traces = [ode_witness(f, t1, g0, horizon, tol, profile) for g0 in grid]
        alive = [t for t in traces if t.termination == "HorizonReached"]
        h_cap = max(max(grid) * t1, 1.0) + 1.0
        survivors += [t for t in alive if t.g[-1] * t.x[-1] <= h_cap]
        record = {"t1": t1, "survived": [t.g0 for t in alive]}
        if alive or any(t.termination == "StepUnderflow" for t in traces):
            all_dead = False
        else:
            esc = [traces[-1]]
            g = max(grid)
            for _ in range(escalations):
                g *= 2
                esc.append(ode_witness(f, t1, g, horizon, tol, profile))
            if any(t.x_neg is None for t in esc):
                all_dead = False
            else:
                growth = esc[-1].x_neg / esc[0].x_neg
                record["x_neg_escalation"] = [t.x_neg for t in esc]
                record["survival_growth"] = growth
                if growth > survival_factor:
                    all_dead = False
                else:
                    some_dead = True
        per_t1.append(record)
    evidence = {"tail_max_x2f": tail_max, "tail_min_x2f": tail_min, "per_t1": per_t1,
                "profile_truncated": profile.truncated}
    if survivors and guard:
        w = survivors[0]
        integral = float(np.trapezoid(profile.phi * np.exp(-profile.s) * (profile.s >= math.log(w.t1)),
                                      profile.s))
        evidence["integral_f"] = integral
        evidence["integral_bound"] = w.g0
        return RecIntDecision(Verdict.IN_RR, "ode", params, evidence, witness=w)
    if all_dead:
        return RecIntDecision(Verdict.NOT_IN_RR, "ode", params, evidence)
    if some_dead and tail_min >= QUARTER + margin:
        evidence["comparison"] = f"x^2 f >= {tail_min:.6g} > 1/4 on the tail"
        return RecIntDecision(Verdict.NOT_IN_RR, "ode", params, evidence)
    evidence["reason"] = ("survivor found but x^2 f exceeds 1/4 on the tail" if survivors
                          else "neither survival nor convergent blow-up")
    return RecIntDecision(Verdict.UNDETERMINED, "ode", params, evidence,
                          witness=survivors[0] if survivors else None)


# ---------------------------------------------------------------------------
# discrete criteria


def integer_values(f: Expr, k0: int, N: int) -> np.ndarray:
    """f(k) for k = k0..N, float path when available, profile spline otherwise."""
    ks = np.arange(k0, N + 1, dtype=float)
    if f.has_float_path():
        try:
            return f.eval_array(ks)
        except DomainError:
            pass
    prof = sample_profile(f, k0, N)
    if math.exp(prof.s_hi) < N * (1 - 1e-9):
        raise EvaluationTooCostly(f"cannot evaluate {f} up to {N}")
    return prof.f_at(ks)


def default_k0(f: Expr, limit: int = 10**6) -> int:
    """Smallest integer inside the domain guard with f(k) <= 1/k."""
    k = max(1, math.floor(f.domain_lo) + 1) if f.domain_lo > -math.inf else 1
    while k < limit:
        try:
            if f(k) <= 1.0 / k:
                return k
        except DomainError:
            pass
        k += 1
    raise DomainError("no admissible k0 found")


def backward_sequence(f: Expr, k0: int, N: int, values: np.ndarray | None = None) -> np.ndarray:
    """S_N = 0 and S_k = S_{k+1} + S_{k+1}^2 + f(k) down to k0; returns S_{k0..N}."""
    if N < k0:
        raise ValueError("need N >= k0")
    fv = (values if values is not None else integer_values(f, k0, N)).tolist()
    out = [0.0] * (N - k0 + 1)
    S = 0.0
    for j in range(N - k0 - 1, -1, -1):
        S = S + S * S + fv[j]
        out[j] = S
    return np.array(out)


def _backward_top(fv: list, n: int, threshold: float) -> tuple[float, bool]:
    S = 0.0
    for j in range(n - 1, -1, -1):
        S = S + S * S + fv[j]
        if S > threshold:
            return S, True
    return S, False


def decide_rr_recurrence(f: Expr, k0: int | None = None, N_schedule=None, blowup_threshold: float = 1e6,
                         *, n_max: int = 2**20, rtol: float = 0.02, guard_tol: float = 1e-9,
                         margin: float = COMPARISON_MARGIN) -> RecIntDecision:
    """Backward-sequence criterion.

    S_{k0}^{(N)} increases with N.  Blow-up past the threshold gives NotInRR;
    geometric convergence across the doubling schedule together with
    k^2 f(k) <= 1/4 on the tail gives InRR.  Growth that has not converged,
    with k^2 f(k) >= 1/4 + margin on the tail, gives NotInRR by comparison.
    """
    if k0 is None:
        k0 = default_k0(f)
    if N_schedule is None:
        N_schedule, N = [], 2 * k0
        while N < n_max:
            N_schedule.append(N)
            N *= 2
        N_schedule.append(n_max)
    N_schedule = sorted(int(n) for n in N_schedule)
    n_top = N_schedule[-1]
    try:
        fv = integer_values(f, k0, n_top)
    except EvaluationTooCostly:
        prof = sample_profile(f, k0, n_top)
        n_top = int(math.exp(prof.s_hi))
        N_schedule = [n for n in N_schedule if n <= n_top] or [n_top]
        fv = integer_values(f, k0, n_top)
    if fv.min() < 0:
        raise NegativeFunction("f takes negative values on the recurrence window")
    params = {"k0": k0, "N_schedule": N_schedule, "blowup_threshold": blowup_threshold, "rtol": rtol}
    fl = fv.tolist()
    # membership is a tail property, so blow-up must persist as the start moves right
    blowups = []
    start = k0
    while True:
        values = []
        sched = [N for N in N_schedule if N >= 2 * start] if start > k0 else N_schedule
        for N in sched:
            S, blew = _backward_top(fl[start - k0:], N - start, blowup_threshold)
            if blew:
                blowups.append({"k0": start, "blowup_N": N, "S_k0": S})
                break
            values.append(S)
        else:
            break
        if 4 * start > n_top // 64:
            return RecIntDecision(Verdict.NOT_IN_RR, "recurrence", params,
                                  {"blowups": blowups, "S_k0_by_N": values})
        start *= 4
    if start != k0:
        params["k0_used"] = start
        k0 = start
    for a, b in zip(values, values[1:]):
        if b < a * (1 - 1e-12) - 1e-300:
            raise AssertionError("S_k0^(N) decreased in N")
    ks = np.arange(params["k0"], n_top + 1)
    tail = ks >= n_top // 4
    k2f = fv[tail] * ks[tail].astype(float) ** 2
    tail_max, tail_min = float(np.max(k2f)), float(np.min(k2f))
    evidence = {"S_k0_by_N": values, "tail_max_k2f": tail_max, "tail_min_k2f": tail_min,
                "kS_k0": k0 * values[-1], "blowups": blowups}
    converged = False
    if len(values) >= 3:
        d1, d2 = values[-2] - values[-3], values[-1] - values[-2]
        if d2 <= 0:
            converged = True
        elif d1 > 0:
            r = d2 / d1
            if r < 0.95:
                remainder = d2 * r / (1 - r)
                evidence["extrapolated_remainder"] = remainder
                converged = remainder <= rtol * values[-1]
    if converged and tail_max <= QUARTER + guard_tol:
        return RecIntDecision(Verdict.IN_RR, "recurrence", params, evidence)
    if not converged and tail_min >= QUARTER + margin:
        evidence["comparison"] = f"k^2 f >= {tail_min:.6g} > 1/4 on the tail"
        return RecIntDecision(Verdict.NOT_IN_RR, "recurrence", params, evidence)
    evidence["reason"] = "converging but x^2 f exceeds 1/4 on the tail" if converged else "not yet converged"
    return RecIntDecision(Verdict.UNDETERMINED, "recurrence", params, evidence)


@dataclass
class ForwardResult:
    S: np.ndarray
    first_negative: int | None


def forward_C2(f: Expr, t: float, S_start: float, k0: int, K: int) -> ForwardResult:
    """S_{k+1} = S_k - S_k^2 - t S_k^3 - f(k) for k = k0..K-1."""
    if S_start > 1.0 / max(5.0, abs(t) + 1.0):
        raise ValueError("S_start exceeds 1/max(5, |t|+1)")
    fv = integer_values(f, k0, K).tolist()
    out = [S_start]
    S = S_start
    for j in range(K - k0):
        S = S - S * S - t * S * S * S - fv[j]
        out.append(S)
        if S < 0:
            return ForwardResult(np.array(out), k0 + j + 1)
    return ForwardResult(np.array(out), None)


# ---------------------------------------------------------------------------
# transforms and the orchestrating decider


def log_transform(f: Expr) -> Expr:
    """F(x) = (1/x^2)[1/4 + f(log x)]; f in RR iff F in RR."""
    if isinstance(f, FamilyNC):
        return FamilyNC(f.N + 1, f.C)
    return LogTransform(f)


def scale(f: Expr, lam) -> Expr:
    """f_lambda(x) = lambda^2 f(lambda x); membership is unchanged."""
    if lam == 1:
        return f
    return Scaled(f, lam)


def _combine(dec_ode: RecIntDecision | None, dec_rec: RecIntDecision | None) -> tuple[Verdict, str]:
    got = [d for d in (dec_ode, dec_rec) if d is not None and d.verdict.decisive]
    if not got:
        return Verdict.UNDETERMINED, "none"
    if len({d.verdict for d in got}) > 1:
        return Verdict.UNDETERMINED, "conflict"
    return got[0].verdict, "+".join(d.method for d in got)


def _sign_screen(f: Expr, x_lo: float, x_hi: float) -> tuple[str, float]:
    """Classify the sign of f on the upper half (in log scale) of [x_lo, x_hi].

    Returns ('nonpositive' | 'positive' | 'mixed', start of the positive tail).
    """
    prof = sample_profile(f, x_lo, x_hi)
    n = len(prof.s)
    upper = prof.phi[n // 2:]
    if upper.max() <= 0:
        return "nonpositive", x_lo
    if upper.min() < 0:
        return "mixed", x_lo
    neg = np.nonzero(prof.phi < 0)[0]
    start = math.exp(prof.s[neg[-1] + 1]) if len(neg) else x_lo
    return "positive", start


def decide_rr(f: Expr, method: str = "both", *, horizon: float = 1e6, k0: int | None = None,
              n_max: int = 2**20, t1_grid=None, max_reductions: int = 4,
              reduced_horizon: float = 1e9, reduced_n_max: int = 2**22) -> RecIntDecision:
    """Decide f in RR, reducing through the inverse log transform near x^2 f -> 1/4.

    Level 0 uses the caller's horizon, k0 and n_max.  After an undetermined
    round with x^2 f above 1/4 on the tail, f is replaced by
    g(y) = e^{2y} f(e^y) - 1/4 (exactly when f was built as a transform) and
    the round repeats on g with the reduced horizons.  g eventually <= 0
    means f <= 1/(4x^2) eventually, hence InRR.
    """
    if method not in ("ode", "recurrence", "both"):
        raise ValueError("method must be ode, recurrence or both")
    chain = []
    g = f
    for level in range(max_reductions + 1):
        hz = horizon if level == 0 else reduced_horizon
        nm = n_max if level == 0 else reduced_n_max
        lk0 = k0 if level == 0 else None
        grid = t1_grid if level == 0 else None
        x_lo = max(1.0, 2.0 * g.domain_lo) if g.domain_lo > 0 else 1.0
        sign, tail_start = _sign_screen(g, x_lo, hz)
        entry = {"level": level, "function": g.prefix(), "sign": sign}
        chain.append(entry)
        params = {"method": method, "horizon": horizon, "k0": k0, "n_max": n_max,
                  "max_reductions": max_reductions}
        if sign == "nonpositive":
            if level == 0:
                raise NegativeFunction("f is eventually negative")
            return RecIntDecision(Verdict.IN_RR, "reduction", params,
                                  {"reason": "reduced function eventually <= 0, so the previous "
                                             "level is at most 1/(4x^2) on the tail"},
                                  level=level, chain=chain)
        if sign == "mixed":
            return RecIntDecision(Verdict.UNDETERMINED, "reduction", params,
                                  {"reason": "sign changes on the sampled tail"}, level=level, chain=chain)
        if tail_start > x_lo:
            x_lo = 2.0 * tail_start
            grid = None
            lk0 = max(lk0 or 0, math.ceil(x_lo))
        dec_ode = dec_rec = None
        if method in ("ode", "both"):
            dec_ode = decide_rr_ode(g, grid or _default_t1_grid_from(x_lo, hz), horizon=hz)
            entry["ode"] = dec_ode.verdict.value
        if method in ("recurrence", "both"):
            kk = lk0 if lk0 is not None else default_k0(g)
            kk = max(kk, math.ceil(x_lo) if x_lo > 1 else kk)
            dec_rec = decide_rr_recurrence(g, kk, n_max=max(nm, 4 * kk))
            entry["recurrence"] = dec_rec.verdict.value
        verdict, how = _combine(dec_ode, dec_rec)
        evidence = {"ode": dec_ode.to_dict() if dec_ode else None,
                    "recurrence": dec_rec.to_dict() if dec_rec else None}
        if how == "conflict":
            evidence["reason"] = "ode and recurrence disagree"
            return RecIntDecision(Verdict.UNDETERMINED, "conflict", params, evidence,
                                  level=level, chain=chain)
        witness = dec_ode.witness if dec_ode is not None and dec_ode.verdict is Verdict.IN_RR else None
        if verdict.decisive:
            return RecIntDecision(verdict, how, params, evidence, witness=witness, level=level, chain=chain)
        tail_max = max(d.evidence.get("tail_max_x2f", d.evidence.get("tail_max_k2f", math.inf))
                       for d in (dec_ode, dec_rec) if d is not None)
        if tail_max <= QUARTER + 1e-9:
            evidence["reason"] = "x^2 f <= 1/4 on the tail; compare with the solution 1/(2x)"
            return RecIntDecision(Verdict.IN_RR, "comparison", params, evidence, level=level, chain=chain)
        if level == max_reductions:
            break
        g = inverse_log_transform(g)
    return RecIntDecision(Verdict.UNDETERMINED, "exhausted", params, {"reason": "reduction depth reached"},
                          level=level, chain=chain)


def _default_t1_grid_from(x_lo: float, horizon: float) -> tuple[float, ...]:
    return tuple(t for t in (x_lo, 4 * x_lo, 16 * x_lo) if t < horizon / 100) or (x_lo,)


def ignorable_margin(f1: Expr, f2: Expr, horizon: float = 1e6) -> RecIntDecision:
    """Decide f1 + f2 with the recurrence criterion."""
    return decide_rr(Add(f1, f2), "recurrence", horizon=horizon)


@dataclass
class FamilyPosition:
    N: int
    C: float | None
    side: str

    @property
    def verdict(self) -> Verdict:
        return {"BelowInRR": Verdict.IN_RR, "AboveNotInRR": Verdict.NOT_IN_RR}.get(
            self.side, Verdict.UNDETERMINED)


def classify_vs_family(f: Expr, N_max: int = 3, C_above=(0.3, 0.5, 1.0, 2.0),
                       window: tuple[float, float] = (1e4, 1e12), samples: int = 256) -> FamilyPosition:
    """Place f against the f_{N,C} ladder by sampled eventual comparison.

    f <= f_{N,1/4} eventually puts f in RR; f >= f_{N,C} with C > 1/4 puts it
    outside.
    """
    for N in range(-1, N_max + 1):
        ref = f_NC(N, 0.25)
        lo = max(window[0], 10 * max(ref.domain_lo, f.domain_lo, 1.0))
        hi = max(window[1], lo * 1e8)
        if eventually_compare(f, ref, (lo, hi), samples) == "LE":
            return FamilyPosition(N, 0.25, "BelowInRR")
        for C in C_above:
            if eventually_compare(f, f_NC(N, C), (lo, hi), samples) == "GE":
                return FamilyPosition(N, C, "AboveNotInRR")
    return FamilyPosition(N_max, None, "Undetermined")
