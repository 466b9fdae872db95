"""
Command line front end.

    ness-radius radius  --mode epsilon --N 4 --delta 0 --mu 1/2
    ness-radius table1  --out table1.csv
    ness-radius fig1    --delta 0,1/2,1,2,4,10 --mu 1/2
    ness-radius fig2    --N 4,5 --epsilon 1
    ness-radius verify  --mode mu --N 2 --delta 1 --epsilon 1 --at 1
    ness-radius xx-check

Exit codes: 0 success, 2 invalid flags, 3 no dependence found within the
order cap, 4 numerical failure, 5 verification mismatch.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .experiments import (
    InfeasibleSweep,
    SweepRecord,
    SweepSpec,
    VerifyReport,
    records_to_csv,
    results_to_json,
    run_n0_table,
    run_radius_vs_delta,
    run_radius_vs_N,
    run_xx_check,
    table1_specs,
    verify_resolvent_vs_oracle,
)
from .expansion import ExpansionError, Mode, NoDependenceFound, Tolerances, companion_radius, generate_sequence
from .liouvillian import NessError
from .operators import SystemParams, as_rational

OUT_ENV = "NESS_RADIUS_OUT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_DEPENDENCE = 3
EXIT_NUMERICAL = 4
EXIT_MISMATCH = 5

log = logging.getLogger("ness_radius")


def rational(text: str) -> Fraction:
    """Parse "p/q", a decimal, or a power "b^k" exactly."""
    text = text.strip()
    try:
        if "^" in text:
            base, exp = text.split("^", 1)
            return as_rational(base) ** int(exp)
        return as_rational(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def rational_list(text: str) -> list[Fraction]:
    return [rational(t) for t in text.split(",") if t.strip()]


def int_list(text: str) -> list[int]:
    try:
        out = []
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-", 1)
                out += list(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        return out
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from exc


def precision_arg(text: str):
    if text in ("exact", "double", "auto"):
        return text
    try:
        bits = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("precision is exact, double, auto or a bit count") from exc
    if bits < 53:
        raise argparse.ArgumentTypeError("bit count must be at least 53")
    return bits


def scale_arg(text: str):
    if text == "auto":
        return text
    value = float(rational(text))
    if not value > 0:
        raise argparse.ArgumentTypeError("scale must be positive")
    return value


def _add_numerics(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("numerics")
    g.add_argument("--precision", type=precision_arg, default="exact",
                   help="exact | double | auto, or a bit count (exact arithmetic, roots isolated at that precision)")
    g.add_argument("--bits", type=int, default=128, help="working precision for root isolation (default 128)")
    g.add_argument("--scale", type=scale_arg, default="auto", help="term rescaling factor s, or auto")
    g.add_argument("--max-n", type=int, default=400, help="order cap for the dependence search")
    g.add_argument("--tol-dep", type=float, default=Tolerances.dep)
    g.add_argument("--tol-res", type=float, default=Tolerances.res)
    g.add_argument("--tol-null", type=float, default=Tolerances.null)
    g.add_argument("--tol-cond", type=float, default=Tolerances.cond)


def _add_output(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("output")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--out", type=Path, help=f"output file (default: ${OUT_ENV}/<command>.<format> if set, else stdout)")
    g.add_argument("--record-timing", action="store_true", help="fill wall_time_ms (makes output non-deterministic)")


def _add_pool(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=None, help="parallel worker processes (default: available cores)")
    p.add_argument("--allow-slow", action="store_true", help="permit sizes beyond the default budget")


def _add_point(p: argparse.ArgumentParser, lists: bool = False) -> None:
    p.add_argument("--mode", choices=[m.value for m in Mode], required=True)
    if lists:
        p.add_argument("--N", type=int_list, required=True, help="chain length(s), e.g. 2,3 or 2-4")
        p.add_argument("--delta", type=rational_list, required=True, help="anisotropy value(s), e.g. 0,1/2")
    else:
        p.add_argument("--N", type=int, required=True, help="chain length")
        p.add_argument("--delta", type=rational, required=True, help="anisotropy, e.g. 1/2")
    p.add_argument("--mu", type=rational, help="bias (epsilon mode; default 1/2)")
    p.add_argument("--epsilon", type=rational, help="coupling (mu mode; default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ness-radius", description="Convergence radius of perturbative NESS expansions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("radius", help="critical index and radius at one parameter point")
    _add_point(p)
    _add_numerics(p)
    _add_output(p)
    p.set_defaults(func=cmd_radius)

    p = sub.add_parser("table1", help="critical index table, rows A, B, C")
    p.add_argument("--rows", default="A,B,C", help="subset of A,B,C")
    p.add_argument("--n-max", type=int, help="largest chain length per row")
    _add_numerics(p)
    _add_output(p)
    _add_pool(p)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("fig1", help="epsilon-mode radius against N, with log-linear fits")
    p.add_argument("--N", type=int_list, default=[2, 3, 4, 5])
    p.add_argument("--delta", type=rational_list, default=rational_list("0,1/2,1,2,4,10"))
    p.add_argument("--mu", type=rational, default=Fraction(1, 2))
    _add_numerics(p)
    _add_output(p)
    _add_pool(p)
    p.set_defaults(func=cmd_fig1)

    p = sub.add_parser("fig2", help="mu-mode radius against delta on a log grid")
    p.add_argument("--N", type=int_list, default=[4, 5])
    p.add_argument("--delta", type=rational_list,
                   default=[Fraction(2) ** k for k in range(-14, 15, 2)],
                   help="anisotropy grid (default 2^-14 ... 2^14)")
    p.add_argument("--epsilon", type=rational, default=Fraction(1))
    _add_numerics(p)
    _add_output(p)
    _add_pool(p)
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("verify", help="compare the resolvent NESS with the direct null-space NESS")
    _add_point(p, lists=True)
    p.add_argument("--at", default="half-radius", help="expansion value, or half-radius")
    p.add_argument("--force", action="store_true", help="allow values outside the radius")
    p.add_argument("--threshold", type=float, default=1e-8)
    _add_numerics(p)
    _add_pool(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("xx-check", help="delta = 0 companion spectrum is +-1/2 with multiplicity N-1")
    p.add_argument("--N", type=int_list, default=[2, 3, 4, 5, 6])
    p.add_argument("--mu", type=rational, default=Fraction(1, 2))
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--precision", type=precision_arg, default="exact")
    p.set_defaults(func=cmd_xx_check)
    return parser


# -- helpers -------------------------------------------------------------------


def _precision(args) -> tuple[str, int]:
    if isinstance(args.precision, int):
        return "exact", args.precision
    return args.precision, args.bits


def _tolerances(args) -> Tolerances:
    return Tolerances(args.tol_dep, args.tol_res, args.tol_null, args.tol_cond)


def _fixed(parser, args, mode: Mode) -> Fraction:
    if mode is Mode.EPSILON:
        if args.epsilon is not None:
            parser.error("--epsilon is fixed to 1 in epsilon mode; use --mu")
        return Fraction(1, 2) if args.mu is None else args.mu
    if args.mu is not None:
        parser.error("--mu is the expansion variable in mu mode; use --epsilon")
    return Fraction(1) if args.epsilon is None else args.epsilon


def _params(mode: Mode, N: int, delta: Fraction, fixed: Fraction) -> SystemParams:
    if mode is Mode.EPSILON:
        return SystemParams(N, delta, epsilon=1, mu=fixed)
    return SystemParams(N, delta, epsilon=fixed, mu=0)


def _emit(args, name: str, csv_text: str, json_text: str) -> None:
    text = csv_text if args.format == "csv" else json_text
    out = args.out
    if out is None and os.environ.get(OUT_ENV):
        out = Path(os.environ[OUT_ENV]) / f"{name}.{args.format}"
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    print(f"wrote {out}", file=sys.stderr)


def _report(*lines) -> None:
    # summaries go to stderr so that stdout can carry the data stream
    for line in lines:
        print(line, file=sys.stderr)


def _spec(args, mode, N_list, deltas, fixed) -> SweepSpec:
    precision, bits = _precision(args)
    return SweepSpec(mode, N_list, deltas, fixed, precision=precision, scale=args.scale, max_n=args.max_n,
                     bits=bits, tol=_tolerances(args), record_timing=args.record_timing,
                     allow_slow=getattr(args, "allow_slow", False))


# -- commands --------------------------------------------------------------------


def cmd_radius(parser, args) -> int:
    mode = Mode(args.mode)
    fixed = _fixed(parser, args, mode)
    try:
        params = _params(mode, args.N, args.delta, fixed)
    except ValueError as exc:
        parser.error(str(exc))
    precision, bits = _precision(args)
    start = time.perf_counter()
    seq, dep = generate_sequence(params, mode, args.max_n, precision, _tolerances(args), args.scale)
    rad = companion_radius(dep, bits=bits)
    elapsed = (time.perf_counter() - start) * 1e3 if args.record_timing else None
    spec = _spec(args, mode, [args.N], [args.delta], fixed)
    record = SweepRecord(mode.value, params.N, params.delta, params.mu, params.epsilon, dep.n0, rad.radius,
                         rad.max_eig_modulus, rad.scale, dep.fit_residual, elapsed)
    print(f"mode={mode.value} N={params.N} delta={params.delta} mu={params.mu} epsilon={params.epsilon}")
    print(f"n0={dep.n0}")
    print(f"lambda={'inf' if rad.infinite else repr(rad.radius)}")
    print(f"scale_s={rad.scale!r} max_eig_modulus={rad.max_eig_modulus!r} method={rad.method}")
    top = sorted(rad.multiplicities, key=lambda zm: -abs(zm[0]))[:6]
    summary = ", ".join(f"{complex(z):.6g} (x{m})" for z, m in top)
    print(f"spectrum: {len(rad.spectrum)} eigenvalues; largest: {summary}")
    if args.out is not None:
        _emit(args, "radius", records_to_csv([record]), results_to_json(spec.as_dict(), [record], precision=precision))
    return EXIT_OK


def cmd_table1(parser, args) -> int:
    labels = [r.strip().upper() for r in args.rows.split(",") if r.strip()]
    if not labels or any(lab not in ("A", "B", "C") for lab in labels):
        parser.error("--rows takes a subset of A,B,C")
    precision, bits = _precision(args)
    n_max = {lab: args.n_max for lab in labels} if args.n_max else None
    try:
        specs = table1_specs(n_max, precision=precision, scale=args.scale, max_n=args.max_n, bits=bits,
                             tol=_tolerances(args), record_timing=args.record_timing, allow_slow=args.allow_slow)
    except InfeasibleSweep as exc:
        parser.error(str(exc))
    specs = {lab: s for lab, s in specs.items() if lab in labels}
    result = run_n0_table(specs, args.workers)
    _report(result.format())
    for label, N, got, want in result.mismatches:
        _report(f"row {label} N={N}: got {got}, reference {want}")
    for r in result.records:
        if not r.ok:
            _report(f"N/A {r.mode} N={r.N} delta={r.delta}: {r.error}")
    spec_dict = {lab: s.as_dict() for lab, s in specs.items()}
    _emit(args, "table1", records_to_csv(result.records),
          results_to_json(spec_dict, result.records, precision=precision,
                          extra={"rows": {k: {str(N): v for N, v in row.items()} for k, row in result.rows.items()}}))
    return EXIT_OK if any(r.ok for r in result.records) else EXIT_NUMERICAL


def _sweep_output(args, name, spec, report, precision) -> int:
    for c in report.checks:
        _report(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}")
    fits = [{"delta": d, **f.as_dict()} for d, f in sorted(report.fits.items(), key=lambda kv: as_rational(kv[0]))]
    for f in fits:
        _report(f"fit log(lambda) vs N at delta={f['delta']}: slope={f['slope']:.6g} r2={f['r_squared']:.6f}")
    for N, s in sorted(report.slopes.items()):
        _report(f"N={N}: mean log-log slope for delta<=1: {s['mean_slope_below_1']} (guideline -1)")
    for r in report.records:
        if not r.ok:
            _report(f"N/A N={r.N} delta={r.delta}: {r.error}")
    extra = {"checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in report.checks]}
    if report.slopes:
        extra["slopes"] = {str(N): s for N, s in sorted(report.slopes.items())}
    _emit(args, name, records_to_csv(report.records),
          results_to_json(spec.as_dict(), report.records, fits, precision=precision, extra=extra))
    return EXIT_OK if any(r.ok for r in report.records) else EXIT_NUMERICAL


def cmd_fig1(parser, args) -> int:
    precision, _ = _precision(args)
    try:
        spec = _spec(args, Mode.EPSILON, args.N, args.delta, args.mu)
    except (InfeasibleSweep, ValueError) as exc:
        parser.error(str(exc))
    return _sweep_output(args, "fig1", spec, run_radius_vs_N(spec, args.workers), precision)


def cmd_fig2(parser, args) -> int:
    precision, _ = _precision(args)
    try:
        spec = _spec(args, Mode.MU, args.N, args.delta, args.epsilon)
    except (InfeasibleSweep, ValueError) as exc:
        parser.error(str(exc))
    return _sweep_output(args, "fig2", spec, run_radius_vs_delta(spec, args.workers), precision)


def cmd_verify(parser, args) -> int:
    mode = Mode(args.mode)
    fixed = _fixed(parser, args, mode)
    if args.at != "half-radius":
        try:
            at = rational(args.at)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    else:
        at = args.at
    try:
        points = [(_params(mode, N, d, fixed), mode) for N in args.N for d in args.delta]
    except ValueError as exc:
        parser.error(str(exc))
    precision, _ = _precision(args)
    report: VerifyReport = verify_resolvent_vs_oracle(points, at, args.force, precision, args.threshold, args.workers)
    for e in report.entries:
        p = e.params
        head = f"{e.mode} N={p.N} delta={p.delta} mu={p.mu} epsilon={p.epsilon}"
        if e.error:
            print(f"ERROR {head}: {e.error}")
        else:
            lam = "inf" if math.isinf(e.radius) else f"{e.radius:.10g}"
            status = "PASS" if e.distance <= args.threshold else "FAIL"
            print(f"{status} {head} value={e.value:.10g} lambda={lam} trace_distance={e.distance:.3e}")
    print(f"max trace distance {report.max_distance:.3e} (threshold {args.threshold:g})")
    if any(e.error and "OutsideRadius" in e.error for e in report.entries):
        print("values outside the radius are refused unless --force is given", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_MISMATCH


def cmd_xx_check(parser, args) -> int:
    checks = run_xx_check(args.N, args.mu, args.precision if isinstance(args.precision, str) else "exact", args.tol)
    for c in checks:
        eig = ", ".join(f"{z.real:+.12g} (x{m})" for z, m in sorted(c.eigenvalues, key=lambda zm: zm[0].real))
        print(f"{'PASS' if c.ok else 'FAIL'} N={c.N} n0={c.n0} lambda={c.radius:.12g} eigenvalues: {eig}")
    return EXIT_OK if all(c.ok for c in checks) else EXIT_MISMATCH


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(parser, args)
    except NoDependenceFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_DEPENDENCE
    except (ExpansionError, NessError, ArithmeticError, OverflowError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
