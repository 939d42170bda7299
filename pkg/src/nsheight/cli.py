"""Command-line front end.

Every JSON artifact carries {"config", "seed", "version"}; CSV output starts
with a single "# {...}" comment line holding the same record.  Exit codes: 0
ok, 1 Undetermined verdict under --strict, 2 usage or domain error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
from fractions import Fraction
from pathlib import Path

import mpmath

from . import __version__
from .cfrac import (GOLDEN, PI, InvalidSequence, PrecisionExhausted, convergents, denominators_to_cf,
                    expand_rational, expand_real, real_from_mpmath)
from .funexpr import DomainError, ParseError, parse_expr, parse_psi
from .heights import HeightKind, alpha_d, gamma_d

CACHE_ENV = "NSHEIGHT_CACHE_DIR"

CSV_HELP = """\
CSV columns (stable):
  dataprog  k,b1..bd,cost        state index, state vector, per-step cost term
  recint    x,g                  ODE witness trace (with --csv-witness)
  estimate  Q,C_running_min      running minimum of the C estimate by height
"""


# ---------------------------------------------------------------------------
# parsing helpers


_SQRT = re.compile(r"^sqrt(\d+)([+-]\d+)?$")


def parse_real(tok: str):
    """A rational 'p/q', or a named real: pi, e, phi|golden, sqrtN, sqrtN-K, sqrtN+K."""
    tok = tok.strip()
    if re.fullmatch(r"-?\d+(/\d+)?", tok) or re.fullmatch(r"-?\d*\.\d+", tok):
        return Fraction(tok)
    low = tok.lower()
    if low == "pi":
        return PI
    if low in ("phi", "golden"):
        return GOLDEN
    if low == "e":
        return real_from_mpmath(lambda c: c.e)
    m = _SQRT.match(low)
    if m:
        n, shift = int(m.group(1)), int(m.group(2) or 0)
        return real_from_mpmath(lambda c: c.sqrt(n) + shift)
    raise ParseError(f"unknown real {tok!r}")


def parse_point(spec: str):
    """Comma-separated reals, or bad:D:N for the constructed worst point for H_max."""
    if spec.startswith("bad:"):
        from .dirichlet import build_bad_point_for_max
        _, d, n = spec.split(":")
        return build_bad_point_for_max(int(d), int(n)).x
    return [parse_real(t) for t in spec.split(",")]


def _int_or_float(text: str):
    v = float(text)
    return int(v) if v.is_integer() else v


def read_config(path: str) -> dict:
    """key=value lines; '#' starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


# ---------------------------------------------------------------------------
# output


def _config_of(args) -> dict:
    skip = {"func_handler", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _envelope(args, payload: dict) -> dict:
    return {"config": _config_of(args), "seed": args.seed, "version": __version__, **payload}


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_default)


def _default(o):
    if isinstance(o, Fraction):
        return str(o)
    if isinstance(o, mpmath.mpf):
        return float(o)
    if hasattr(o, "value") and isinstance(getattr(o, "value"), str):
        return o.value
    try:
        return float(o)
    except (TypeError, ValueError):
        return str(o)


def _cache_path(args) -> Path | None:
    root = getattr(args, "cache", None) or os.environ.get(CACHE_ENV)
    if not root:
        return None
    cfg = {k: v for k, v in _config_of(args).items() if k != "cache"}
    key = hashlib.sha256(_dump({"cmd": args.command, **cfg}).encode()).hexdigest()[:24]
    return Path(root) / f"{args.command}-{key}.out"


# ---------------------------------------------------------------------------
# subcommands


def cmd_cfrac(args) -> tuple[str, bool]:
    if args.expand:
        x = parse_real(args.expand)
        cf = expand_rational(x) if isinstance(x, Fraction) else expand_real(x, args.depth, args.precision)
        if args.format == "json":
            return _dump(_envelope(args, {"quotients": cf.quotients})), True
        return json.dumps(cf.quotients, separators=(",", ":")), True
    text = args.from_denoms
    if os.path.exists(text):
        text = Path(text).read_text()
    target = [int(t) for t in re.split(r"[,\s]+", text.strip()) if t]
    cf = denominators_to_cf(target)
    qs = [c.q for c in convergents(cf)]
    sandwich = all(t / 2 <= q <= t for t, q in zip(target, qs))
    payload = {"quotients": cf.quotients, "denominators": qs, "targets": target, "sandwich": sandwich}
    if args.format == "json":
        return _dump(_envelope(args, payload)), True
    lines = [json.dumps(cf.quotients, separators=(",", ":"))]
    lines += [f"n={n} target={t} q={q} ok={t / 2 <= q <= t}" for n, (t, q) in enumerate(zip(target, qs))]
    return "\n".join(lines), True


def cmd_recint(args) -> tuple[str, bool]:
    from .recint import decide_rr
    f = parse_expr(args.func)
    dec = decide_rr(f, args.method, horizon=args.horizon, k0=args.k0, n_max=int(args.n_max))
    if args.csv_witness and dec.witness is not None:
        Path(args.csv_witness).write_text(dec.witness.to_csv())
    return _dump(_envelope(args, {"function": f.prefix(), **dec.to_dict()})), dec.verdict.decisive


def cmd_dirichlet(args) -> tuple[str, bool]:
    from .dirichlet import DVerdict, dirichlet_decide, dirichlet_decide_family
    if args.family:
        N, C = args.family.split(",")
        v = dirichlet_decide_family(args.d, int(N), Fraction(C), cross_check=not args.no_cross_check)
    else:
        v = dirichlet_decide(parse_psi(args.psi, args.d), args.d, horizon=args.horizon)
    return _dump(_envelope(args, v.to_dict())), v.verdict is not DVerdict.UNDETERMINED


def cmd_omega(args) -> tuple[str, bool]:
    from .dirichlet import estimate_omega
    x = parse_point(args.point)
    q = int(float(args.qmax)) if args.qmax is not None else None
    est = estimate_omega(x, args.height, q)
    return _dump(_envelope(args, est.to_dict())), True


def cmd_estimate(args) -> tuple[str, bool]:
    from .dirichlet import estimate_C
    x = parse_point(args.point)
    psi = parse_psi(args.psi, len(x))
    est = estimate_C(x, args.height, psi, int(float(args.qmax)) if args.qmax else None)
    if args.format == "csv":
        return f"# {_dump(_envelope(args, {}))}\n" + est.to_csv().rstrip("\n"), True
    return _dump(_envelope(args, {"estimate": est.estimate, "height": est.record.height,
                                  "window": list(est.window), "global_min": est.global_min})), True


def cmd_dataprog(args) -> tuple[str, bool]:
    from .dataprog import classify_periodic_geometric, cost, periodic_geometric
    d, g = args.periodic_geometric
    d = int(d)
    gamma = mpmath.mpf(g)
    xi, alpha = args.cost
    alpha = mpmath.mpf(alpha)
    prog = periodic_geometric(d, gamma)
    rep = cost(prog, xi, lambda b: alpha * b, args.k)
    header = _envelope(args, {"trend": rep.trend.value,
                              "closed_form": classify_periodic_geometric(d, gamma, alpha).value})
    return f"# {_dump(header)}\n" + rep.to_csv(prog).rstrip("\n"), True


def cmd_adversary(args) -> tuple[str, bool]:
    from .dirichlet import minprod_uniform_check
    rep = minprod_uniform_check(args.kind, args.d, args.trials, args.seed)
    return _dump(_envelope(args, vars(rep))), True


def cmd_gamma(args) -> tuple[str, bool]:
    from .dirichlet import gamma_optimum_check
    rep = gamma_optimum_check(args.d)
    return _dump(_envelope(args, vars(rep))), True


def cmd_constants(args) -> tuple[str, bool]:
    from .heights import omega_exponent
    d = args.d
    payload = {"gamma_d": float(gamma_d(d)), "alpha_d": float(alpha_d(d)),
               "omega": {k.value: omega_exponent(k, d) for k in HeightKind}}
    return _dump(_envelope(args, payload)), True


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsheight", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter, epilog=CSV_HELP)
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file overriding defaults")
    common.add_argument("--precision", type=int, default=113, help="working precision in bits")
    common.add_argument("--format", choices=("json", "csv", "human"), default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--strict", action="store_true", help="exit 1 on an Undetermined verdict")
    common.add_argument("--cache", default=None, help=f"cache directory (default ${CACHE_ENV})")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cfrac", parents=[common], help="continued fractions")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--expand", help="p/q or a named real (pi, phi, e, sqrtN, sqrtN-K)")
    g.add_argument("--from-denoms", help="comma-separated doubling targets, or a file holding them")
    c.add_argument("--depth", type=int, default=20)
    c.set_defaults(func_handler=cmd_cfrac)

    r = sub.add_parser("recint", parents=[common], help="decide recursive integrability")
    r.add_argument("--func", required=True, help='expression in x, e.g. "0.2/x^2" or "fNC(1,0.3)"')
    r.add_argument("--method", choices=("ode", "recurrence", "both"), default="both")
    r.add_argument("--horizon", type=float, default=1e6)
    r.add_argument("--k0", type=int, default=None)
    r.add_argument("--n-max", type=_int_or_float, default=2**20)
    r.add_argument("--csv-witness", default=None, help="write the ODE witness trace (x,g) here")
    r.set_defaults(func_handler=cmd_recint)

    dr = sub.add_parser("dirichlet", parents=[common], help="Dirichlet decision for H_max")
    dr.add_argument("--d", type=int, required=True)
    gg = dr.add_mutually_exclusive_group(required=True)
    gg.add_argument("--psi", help="power:A | family:N,C | custom:EXPR(q)")
    gg.add_argument("--family", help="N,C: decide psi_{N,C} through the family reduction")
    dr.add_argument("--horizon", type=float, default=1e6)
    dr.add_argument("--no-cross-check", action="store_true")
    dr.set_defaults(func_handler=cmd_dirichlet)

    o = sub.add_parser("omega", parents=[common], help="estimate the exponent of irrationality")
    o.add_argument("--point", required=True, help='e.g. "sqrt2-1,sqrt3-1" or "bad:3:25"')
    o.add_argument("--height", choices=[k.value for k in HeightKind], required=True)
    o.add_argument("--qmax", default=None)
    o.set_defaults(func_handler=cmd_omega)

    e = sub.add_parser("estimate", parents=[common], help="estimate C_{H,psi}(x)")
    e.add_argument("--point", required=True)
    e.add_argument("--height", choices=[k.value for k in HeightKind], required=True)
    e.add_argument("--psi", required=True)
    e.add_argument("--qmax", default=None)
    e.set_defaults(func_handler=cmd_estimate)

    dp = sub.add_parser("dataprog", parents=[common], help="periodic geometric progressions")
    dp.add_argument("--periodic-geometric", nargs=2, metavar=("D", "GAMMA"), required=True)
    dp.add_argument("--cost", nargs=2, metavar=("XI", "ALPHA"), required=True,
                    help="combiner (max|min|sum) and the slope of Psi(b) = ALPHA*b")
    dp.add_argument("--k", type=int, default=40)
    dp.set_defaults(func_handler=cmd_dataprog)

    a = sub.add_parser("adversary", parents=[common], help="random variance-descent plays")
    a.add_argument("--kind", choices=("min", "prod", "max"), required=True)
    a.add_argument("--d", type=int, required=True)
    a.add_argument("--trials", type=int, default=1000)
    a.set_defaults(func_handler=cmd_adversary)

    gm = sub.add_parser("gamma", parents=[common], help="check the geometric optimum gamma_d")
    gm.add_argument("--d", type=int, required=True)
    gm.set_defaults(func_handler=cmd_gamma)

    k = sub.add_parser("constants", parents=[common], help="gamma_d, alpha_d and exponents")
    k.add_argument("--d", type=int, required=True)
    k.set_defaults(func_handler=cmd_constants)
    return p


_DEFAULT_FORMAT = {"cfrac": "human", "dataprog": "csv"}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = read_config(args.config)
        except (OSError, ParseError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = set(cfg) - set(known)
        if unknown:
            print(f"error: unknown config keys {sorted(unknown)}", file=sys.stderr)
            return 2
        sub.set_defaults(**{k: (known[k].type(v) if known[k].type else v) for k, v in cfg.items()})
        args = parser.parse_args(argv)
    if args.format is None:
        args.format = _DEFAULT_FORMAT.get(args.command, "json")
    if args.precision <= 0:
        print("error: precision must be positive", file=sys.stderr)
        return 2
    cache = _cache_path(args)
    if cache is not None and cache.exists():
        text = cache.read_text()
        decisive = not cache.with_suffix(".undetermined").exists()
    else:
        try:
            with mpmath.workprec(args.precision):
                text, decisive = args.func_handler(args)
        except (DomainError, ParseError, InvalidSequence, PrecisionExhausted, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if cache is not None:
            cache.parent.mkdir(parents=True, exist_ok=True)
            cache.write_text(text)
            if not decisive:
                cache.with_suffix(".undetermined").touch()
    print(text)
    if args.strict and not decisive:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
