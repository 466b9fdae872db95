"""
Parameter sweeps: critical-index table, radius against chain length and
against anisotropy, the XX spectrum check and the oracle comparison.

Every sweep cell is independent. Cells run in a process pool, a failing cell
becomes an N/A record carrying its diagnostic, and records are sorted on
write so output files do not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import stats

from . import __version__
from .expansion import (
    ExpansionError,
    Mode,
    OutsideRadius,
    Tolerances,
    companion_radius,
    generate_sequence,
    resolvent_reconstruct,
)
from .liouvillian import NessError, direct_ness, trace_distance
from .operators import SystemParams, as_rational

SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "mode", "N", "delta", "mu", "epsilon", "n0", "lambda",
    "max_eig_modulus", "scale_s", "fit_residual", "wall_time_ms",
]
NA = "N/A"

# critical indices of the three reference rows
REFERENCE_N0 = {
    "A": {2: 2, 3: 6, 4: 26, 5: 98},
    "B": {2: 2, 3: 4, 4: 6, 5: 8, 6: 10},
    "C": {2: 2, 3: 4, 4: 12, 5: 36},
}
ROW_LABELS = {
    "A": "epsilon mode, delta=1/2, mu=1/2",
    "B": "epsilon mode, delta=0, mu=1/2",
    "C": "mu mode, delta=1, epsilon=1",
}

# sizes that finish in minutes on one core; larger ones need allow_slow
FEASIBLE_N = {"epsilon": 5, "epsilon_xx": 6, "mu": 5}


class Degenerate(ValueError):
    pass


class InfeasibleSweep(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    mode: Mode
    N_list: tuple
    delta_list: tuple
    fixed: Fraction  # mu in epsilon mode, epsilon in mu mode
    precision: str = "exact"
    scale: Union[str, float] = "auto"
    max_n: int = 400
    bits: int = 128
    tol: Tolerances = Tolerances()
    record_timing: bool = False
    allow_slow: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "N_list", tuple(int(n) for n in self.N_list))
        object.__setattr__(self, "delta_list", tuple(as_rational(d) for d in self.delta_list))
        object.__setattr__(self, "fixed", as_rational(self.fixed))
        if not self.N_list or not self.delta_list:
            raise ValueError("sweep grids must be non-empty")
        if any(d < 0 for d in self.delta_list):
            raise ValueError("anisotropy values must be non-negative")
        if self.mode is Mode.MU and self.fixed <= 0:
            raise ValueError("mu mode needs a positive coupling")
        if not self.allow_slow:
            for N in self.N_list:
                for d in self.delta_list:
                    if N > feasible_limit(self.mode, d):
                        raise InfeasibleSweep(
                            f"N={N} at delta={d} is beyond the default budget; pass allow_slow"
                        )

    def cells(self) -> list[SystemParams]:
        out = []
        for N in self.N_list:
            for d in self.delta_list:
                if self.mode is Mode.EPSILON:
                    out.append(SystemParams(N, d, epsilon=1, mu=self.fixed))
                else:
                    out.append(SystemParams(N, d, epsilon=self.fixed, mu=0))
        return out

    def as_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "N": list(self.N_list),
            "delta": [str(d) for d in self.delta_list],
            "mu" if self.mode is Mode.EPSILON else "epsilon": str(self.fixed),
            "precision": self.precision,
            "scale": str(self.scale),
            "max_n": self.max_n,
            "bits": self.bits,
            "tolerances": asdict(self.tol),
        }


def feasible_limit(mode: Union[Mode, str], delta: Fraction) -> int:
    mode = Mode(mode)
    if mode is Mode.MU:
        return FEASIBLE_N["mu"]
    return FEASIBLE_N["epsilon_xx"] if delta == 0 else FEASIBLE_N["epsilon"]


@dataclass
class SweepRecord:
    mode: str
    N: int
    delta: Fraction
    mu: Fraction
    epsilon: Fraction
    n0: Optional[int]
    lam: float
    max_eig_modulus: float
    scale_s: float
    fit_residual: float
    wall_time_ms: Optional[float] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.n0 is not None

    @property
    def key(self) -> tuple:
        return (self.mode, self.N, self.delta, self.mu, self.epsilon)

    def bookkeeping_ok(self, rtol: float = 1e-12) -> bool:
        if not self.ok:
            return True
        if math.isinf(self.lam):
            return self.max_eig_modulus == 0
        return abs(self.lam * self.max_eig_modulus * self.scale_s - 1) <= rtol

    def to_row(self) -> dict:
        def num(x):
            if x is None or (isinstance(x, float) and math.isnan(x)):
                return NA
            return repr(float(x))

        return {
            "mode": self.mode,
            "N": str(self.N),
            "delta": str(self.delta),
            "mu": str(self.mu),
            "epsilon": str(self.epsilon),
            "n0": NA if self.n0 is None else str(self.n0),
            "lambda": num(self.lam),
            "max_eig_modulus": num(self.max_eig_modulus),
            "scale_s": num(self.scale_s),
            "fit_residual": num(self.fit_residual),
            "wall_time_ms": "" if self.wall_time_ms is None else f"{self.wall_time_ms:.1f}",
        }

    @classmethod
    def from_row(cls, row: dict) -> "SweepRecord":
        def num(text):
            return math.nan if text == NA else float(text)

        return cls(
            mode=row["mode"],
            N=int(row["N"]),
            delta=as_rational(row["delta"]),
            mu=as_rational(row["mu"]),
            epsilon=as_rational(row["epsilon"]),
            n0=None if row["n0"] == NA else int(row["n0"]),
            lam=num(row["lambda"]),
            max_eig_modulus=num(row["max_eig_modulus"]),
            scale_s=num(row["scale_s"]),
            fit_residual=num(row["fit_residual"]),
            wall_time_ms=float(row["wall_time_ms"]) if row.get("wall_time_ms") else None,
            error="not available" if row["n0"] == NA else None,
        )

    def to_json(self) -> dict:
        out = self.to_row()
        out["N"] = self.N
        out["n0"] = self.n0
        out["wall_time_ms"] = self.wall_time_ms
        out["error"] = self.error
        return out


def run_cell(params: SystemParams, mode: Union[Mode, str], spec: SweepSpec) -> SweepRecord:
    """One parameter point; failures come back as an N/A record."""
    mode = Mode(mode)
    start = time.perf_counter()
    base = dict(mode=mode.value, N=params.N, delta=params.delta, mu=params.mu, epsilon=params.epsilon)
    try:
        seq, dep = generate_sequence(params, mode, spec.max_n, spec.precision, spec.tol, spec.scale)
        rad = companion_radius(dep, bits=spec.bits)
    except (ExpansionError, ArithmeticError, ValueError) as exc:
        return SweepRecord(**base, n0=None, lam=math.nan, max_eig_modulus=math.nan, scale_s=math.nan,
                           fit_residual=math.nan, error=f"{type(exc).__name__}: {exc}")
    elapsed = (time.perf_counter() - start) * 1e3 if spec.record_timing else None
    return SweepRecord(**base, n0=dep.n0, lam=rad.radius, max_eig_modulus=rad.max_eig_modulus,
                       scale_s=rad.scale, fit_residual=dep.fit_residual, wall_time_ms=elapsed)


def _cell_task(args):
    params, mode, spec = args
    return run_cell(params, mode, spec)


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> list[SweepRecord]:
    tasks = [(p, spec.mode, spec) for p in spec.cells()]
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(tasks) == 1:
        records = [_cell_task(t) for t in tasks]
    else:
        # largest cells first so the slow ones do not start last
        tasks.sort(key=lambda t: -t[0].N)
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            records = list(pool.map(_cell_task, tasks))
    return sort_records(records)


def sort_records(records: Iterable[SweepRecord]) -> list[SweepRecord]:
    return sorted(records, key=lambda r: r.key)


# -- serialization ---------------------------------------------------------------


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in sort_records(records):
        writer.writerow(r.to_row())
    return buf.getvalue()


def records_from_csv(text: str) -> list[SweepRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [SweepRecord.from_row(row) for row in reader]


def results_to_json(spec_dict: dict, records: Sequence[SweepRecord], fits: Sequence[dict] = (),
                    precision: str = "exact", extra: Optional[dict] = None) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "spec": spec_dict,
        "records": [r.to_json() for r in sort_records(records)],
        "fits": list(fits),
        "tool_version": __version__,
        "precision": precision,
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# -- fits --------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    residual_rms: float
    points: int

    def as_dict(self) -> dict:
        return asdict(self)


def linear_fit(points: Sequence[tuple[float, float]]) -> FitResult:
    """Ordinary least squares y = slope x + intercept."""
    if len(points) < 3:
        raise ValueError("a fit needs at least 3 points")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.ptp(x) == 0:
        raise Degenerate("all abscissae are equal")
    res = stats.linregress(x, y)
    resid = y - (res.slope * x + res.intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else float(res.rvalue**2)
    return FitResult(float(res.slope), float(res.intercept), r2, float(np.sqrt(np.mean(resid**2))), len(points))


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


# -- experiments ---------------------------------------------------------------------


@dataclass
class Table1Result:
    rows: dict  # label -> {N: n0 or None}
    records: list
    mismatches: list = field(default_factory=list)

    def format(self) -> str:
        Ns = sorted({N for row in self.rows.values() for N in row})
        lines = ["row  " + " ".join(f"N={N:<4d}" for N in Ns) + "  setting"]
        for label, row in self.rows.items():
            cells = " ".join(f"{(NA if row.get(N) is None else row[N]) if N in row else '-':<6}" for N in Ns)
            lines.append(f"({label})  {cells}  {ROW_LABELS[label]}")
        return "\n".join(lines)


def table1_specs(n_max: Optional[dict] = None, precision: str = "exact", **kw) -> dict:
    n_max = n_max or {}
    rows = {
        "A": (Mode.EPSILON, [Fraction(1, 2)], Fraction(1, 2)),
        "B": (Mode.EPSILON, [Fraction(0)], Fraction(1, 2)),
        "C": (Mode.MU, [Fraction(1)], Fraction(1)),
    }
    out = {}
    for label, (mode, deltas, fixed) in rows.items():
        Ns = [N for N in REFERENCE_N0[label] if N <= n_max.get(label, max(REFERENCE_N0[label]))]
        if Ns:
            out[label] = SweepSpec(mode, Ns, deltas, fixed, precision=precision, **kw)
    return out


def run_n0_table(specs: dict, workers: Optional[int] = None) -> Table1Result:
    rows, records, mismatches = {}, [], []
    for label, spec in specs.items():
        recs = run_sweep(spec, workers)
        rows[label] = {r.N: r.n0 for r in recs}
        records += recs
        for r in recs:
            want = REFERENCE_N0[label].get(r.N)
            if want is not None and r.n0 != want:
                mismatches.append((label, r.N, r.n0, want))
    return Table1Result(rows, records, mismatches)


@dataclass
class SweepReport:
    records: list
    fits: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)


def run_radius_vs_N(spec: SweepSpec, workers: Optional[int] = None) -> SweepReport:
    """Radius against chain length per anisotropy, with a fit of log(lambda) on N."""
    if spec.mode is not Mode.EPSILON:
        raise ValueError("radius against N is an epsilon-mode sweep")
    records = run_sweep(spec, workers)
    report = SweepReport(records)
    for d in spec.delta_list:
        pts = [(r.N, r.lam) for r in records if r.delta == d and r.ok]
        pts.sort()
        lams = [lam for _, lam in pts]
        if d == 0:
            ok = all(abs(lam - 2) <= 1e-8 for lam in lams)
            report.checks.append(Check(f"delta={d}: lambda constant 2", ok, repr(lams)))
        else:
            ok = all(b < a for a, b in zip(lams, lams[1:]))
            report.checks.append(Check(f"delta={d}: lambda decreasing in N", ok, repr(lams)))
        finite = [(N, math.log(lam)) for N, lam in pts if np.isfinite(lam)]
        if len(finite) >= 3:
            report.fits[str(d)] = linear_fit(finite)
    return report


def run_radius_vs_delta(spec: SweepSpec, workers: Optional[int] = None) -> SweepReport:
    """Mu-mode radius against anisotropy on a log grid, with local log-log slopes."""
    if spec.mode is not Mode.MU:
        raise ValueError("radius against delta is a mu-mode sweep")
    records = run_sweep(spec, workers)
    report = SweepReport(records)
    for N in spec.N_list:
        pts = sorted((r.delta, r.lam) for r in records if r.N == N and r.ok)
        lams = [lam for _, lam in pts]
        report.checks.append(Check(f"N={N}: lambda_mu > 1", all(lam > 1 for lam in lams), repr(lams)))
        report.checks.append(
            Check(f"N={N}: lambda_mu non-increasing in delta", all(b <= a for a, b in zip(lams, lams[1:])), repr(lams))
        )
        slopes = []
        for (d0, l0), (d1, l1) in zip(pts, pts[1:]):
            if d0 > 0 and np.isfinite(l0) and np.isfinite(l1):
                slopes.append(
                    {"delta_lo": str(d0), "delta_hi": str(d1),
                     "slope": (math.log(l1) - math.log(l0)) / (math.log(d1) - math.log(d0))}
                )
        below = [s["slope"] for s in slopes if as_rational(s["delta_hi"]) <= 1]
        report.slopes[N] = {
            "local": slopes,
            "mean_slope_below_1": float(np.mean(below)) if below else None,
            "guideline": -1.0,
        }
    return report


@dataclass
class XXCheck:
    N: int
    n0: int
    eigenvalues: list  # (value, multiplicity)
    radius: float
    ok: bool


def run_xx_check(N_list: Sequence[int], mu: Fraction = Fraction(1, 2), precision: str = "exact",
                 tol: float = 1e-8) -> list[XXCheck]:
    """Delta = 0: the companion spectrum should be +-1/2, each N-1 times."""
    out = []
    for N in N_list:
        seq, dep = generate_sequence(SystemParams(N, 0, 1, mu), Mode.EPSILON, precision=precision)
        rad = companion_radius(dep)
        spec = sorted(rad.spectrum, key=lambda z: (z.real, z.imag))
        want = sorted([-0.5] * (N - 1) + [0.5] * (N - 1))
        ok = len(spec) == len(want) and all(abs(z - w) <= tol for z, w in zip(spec, want))
        ok = ok and abs(rad.radius - 2) <= tol
        pairs = [(complex(z), int(m)) for z, m in rad.multiplicities]
        out.append(XXCheck(N, dep.n0, pairs, rad.radius, bool(ok)))
    return out


@dataclass
class VerifyEntry:
    mode: str
    params: SystemParams
    value: float
    radius: float
    distance: float
    error: Optional[str] = None


@dataclass
class VerifyReport:
    entries: list
    threshold: float = 1e-8

    @property
    def max_distance(self) -> float:
        vals = [e.distance for e in self.entries if e.error is None]
        return max(vals) if vals else math.nan

    @property
    def passed(self) -> bool:
        return bool(self.entries) and all(e.error is None and e.distance <= self.threshold for e in self.entries)


def choose_value(mode: Mode, radius: float, at: Union[str, float, Fraction]) -> Fraction:
    """Expansion parameter for a check: a number, or "half-radius".

    Half the radius is used as such when finite; an infinite radius gives 1.
    In mu mode the value is capped at 1, the largest physical bias.
    """
    if isinstance(at, str) and at == "half-radius":
        value = Fraction(1) if math.isinf(radius) else Fraction(radius / 2)
        if mode is Mode.MU:
            value = min(value, Fraction(1))
        return value
    return as_rational(at)


def verify_point(params: SystemParams, mode: Union[Mode, str], at="half-radius", force: bool = False,
                 precision: str = "exact", max_n: int = 400) -> VerifyEntry:
    mode = Mode(mode)
    try:
        seq, dep = generate_sequence(params, mode, max_n, precision)
        rad = companion_radius(dep)
        value = choose_value(mode, rad.radius, at)
        state = resolvent_reconstruct(seq, dep, rad, value, allow_outside=force)
        target = params.with_(epsilon=value) if mode is Mode.EPSILON else params.with_(mu=value)
        if mode is Mode.EPSILON and value == 0:
            d = params.dim
            oracle = np.eye(d) / d
        else:
            oracle = direct_ness(target).rho
        dist = trace_distance(state.rho_inf, oracle)
        return VerifyEntry(mode.value, params, float(value), rad.radius, dist)
    except (ExpansionError, NessError, ArithmeticError, ValueError) as exc:
        return VerifyEntry(mode.value, params, math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


def _verify_task(args):
    return verify_point(*args)


def verify_resolvent_vs_oracle(points: Sequence[tuple[SystemParams, Union[Mode, str]]], at="half-radius",
                               force: bool = False, precision: str = "exact", threshold: float = 1e-8,
                               workers: Optional[int] = 1) -> VerifyReport:
    tasks = [(p, Mode(m), at, force, precision) for p, m in points]
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(tasks) <= 1:
        entries = [_verify_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            entries = list(pool.map(_verify_task, tasks))
    return VerifyReport(entries, threshold)
