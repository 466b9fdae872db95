"""
Acceptance criteria, one test each. Every test records a PASS/FAIL line that
is printed in the pytest terminal summary (see conftest.py).
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, solved
from ness_radius.expansion import (
    companion_radius,
    continued_terms,
    direct_terms,
    mode_maps,
    polynomial_numerator,
    resolvent_reconstruct,
    series_terms,
)
from ness_radius.experiments import REFERENCE_N0, choose_value, linear_fit
from ness_radius.expansion import Mode
from ness_radius.liouvillian import build_dissipators, direct_ness, trace_distance
from ness_radius.operators import devectorize


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def timed(*args, **kw):
    start = time.perf_counter()
    out = solved(*args, **kw)
    return out, time.perf_counter() - start


def test_criterion_01_row_a():
    got, times = {}, {}
    for N in (2, 3, 4, 5):
        (_, _, dep, _), t = timed(N, "1/2", "epsilon", mu="1/2")
        got[N], times[N] = dep.n0, t
    ok = got == REFERENCE_N0["A"]
    ok = ok and max(times[N] for N in (2, 3, 4)) < 60 and times[5] < 900
    record(1, ok, f"row A n0={got} times(s)={ {N: round(t, 1) for N, t in times.items()} }")


def test_criterion_02_row_b():
    got = {N: solved(N, 0, "epsilon", mu="1/2")[2].n0 for N in range(2, 7)}
    record(2, got == {N: 2 * (N - 1) for N in range(2, 7)}, f"row B n0={got}")


def test_criterion_03_row_c():
    got, times = {}, {}
    for N in (2, 3, 4, 5):
        (_, _, dep, _), t = timed(N, 1, "mu", epsilon=1)
        got[N], times[N] = dep.n0, t
    ok = got == REFERENCE_N0["C"] and max(times[N] for N in (2, 3, 4)) < 60 and times[5] < 300
    record(3, ok, f"row C n0={got} times(s)={ {N: round(t, 1) for N, t in times.items()} }")


def test_criterion_04_xx_spectrum():
    bad = []
    for N in range(2, 7):
        _, _, dep, rad = solved(N, 0, "epsilon", mu="1/2")
        spec = np.sort_complex(rad.spectrum)
        want = np.array([-0.5] * (N - 1) + [0.5] * (N - 1))
        if len(spec) != len(want) or np.abs(spec - want).max() > 1e-8 or abs(rad.radius - 2) > 1e-8:
            bad.append(N)
    record(4, not bad, f"spectrum +-1/2 with multiplicity N-1 and lambda=2 for N=2..6; failing N: {bad}")


def test_criterion_05_maximal_bias_truncation():
    # literal check on the trace-free terms rho^(n) of the epsilon series
    worst, numer = {}, {}
    for N in (2, 3):
        _, seq, dep, rad = solved(N, "1/2", "epsilon", mu=1)
        cut = 2 * N - 2
        terms = series_terms(seq, dep, cut + 6)
        norms = [np.linalg.norm(t) * seq.scale**n for n, t in enumerate(terms)]
        worst[N] = max(norms[cut + 1:]) / norms[1]
        P = polynomial_numerator(seq, dep, cut + 6)
        pn = [np.linalg.norm(t) * seq.scale**n for n, t in enumerate(P)]
        numer[N] = (dep.n0, max(pn[cut + 1:]) / pn[1])
    ok = all(w <= 1e-10 for w in worst.values())
    detail = (
        f"max ||rho^(n)||/||rho^(1)|| for n>2N-2: { {N: f'{w:.2e}' for N, w in worst.items()} }; "
        f"unnormalized numerator (n0, same ratio): { {N: (n0, f'{r:.1e}') for N, (n0, r) in numer.items()} }"
    )
    record(5, ok, detail)


def test_criterion_06_mu_radius_above_one():
    grid = [Fraction(2) ** k for k in range(-4, 5)]
    below, rising = [], []
    for N in (2, 3, 4):
        lams = [solved(N, d, "mu", epsilon=1)[3].radius for d in grid]
        below += [(N, str(d)) for d, lam in zip(grid, lams) if not lam > 1]
        rising += [(N, str(d1)) for d1, a, b in zip(grid[1:], lams, lams[1:]) if b > a]
    record(6, not below and not rising,
           f"lambda_mu>1 violations: {below}; increases in delta (N, delta): {rising}")


def test_criterion_07_monotone_shrinkage():
    problems, slopes = [], {}
    for d in ("1/2", 1, 2, 4):
        lams = [solved(N, d, "epsilon", mu="1/2")[3].radius for N in (2, 3, 4)]
        if not (lams[0] > lams[1] > lams[2]):
            problems.append(str(d))
        slopes[str(d)] = linear_fit([(N, math.log(lam)) for N, lam in zip((2, 3, 4), lams)]).slope
    ok = not problems and all(s < 0 for s in slopes.values())
    record(7, ok, f"not decreasing at delta={problems}; slopes={ {k: round(v, 4) for k, v in slopes.items()} }")


def _oracle_distance(N, delta, mode, at="half-radius"):
    params, seq, dep, rad = solved(N, delta, mode, mu="1/2", epsilon=1)
    value = choose_value(Mode(mode), rad.radius, at)
    st = resolvent_reconstruct(seq, dep, rad, value)
    target = params.with_(epsilon=value) if mode == "epsilon" else params.with_(mu=value)
    return trace_distance(st.rho_inf, direct_ness(target).rho)


def test_criterion_08_oracle_equivalence():
    dist = {}
    for N in (2, 3, 4):
        for d in (0, "1/2", 2):
            for mode in ("epsilon", "mu"):
                dist[(N, str(d), mode)] = _oracle_distance(N, d, mode)
            dist[(N, str(d), "mu@1")] = _oracle_distance(N, d, "mu", at="1")
    worst = max(dist, key=dist.get)
    record(8, dist[worst] <= 1e-8, f"{len(dist)} points, max trace distance {dist[worst]:.2e} at {worst}")


def test_criterion_09_equilibrium():
    worst = 0.0
    for N in range(2, 6):
        params, seq, dep, rad = solved(N, "1/2", "epsilon", mu=0)
        eye = np.eye(2**N) / 2**N
        st = resolvent_reconstruct(seq, dep, rad, Fraction(1, 2))
        worst = max(worst, trace_distance(st.rho_inf, eye), trace_distance(direct_ness(params).rho, eye))
    record(9, worst <= 1e-12, f"max trace distance to I/2^N for N=2..5: {worst:.2e}")


INVARIANT_CASES = (
    [(N, "1/2", "epsilon") for N in (2, 3, 4)]
    + [(N, 0, "epsilon") for N in (2, 3, 4, 5)]
    + [(N, 2, "epsilon") for N in (2, 3)]
    + [(N, d, "mu") for N in (2, 3, 4) for d in ("1/4", 1, 4)]
)


def _invariant_failures(N, delta, mode):
    params, seq, dep, rad = solved(N, delta, mode, mu="1/2", epsilon=1)
    A, Dn = mode_maps(build_dissipators(params), mode)
    out = []
    prev = seq.rho0
    for n, term in enumerate(seq.terms, start=1):
        rhs = Dn @ prev / seq.scale
        if np.linalg.norm(A @ term + rhs) > 1e-10 * np.linalg.norm(rhs):
            out.append(f"residual n={n}")
        if abs(np.vdot(seq.rho0, term)) > 1e-12 * np.linalg.norm(term):
            out.append(f"trace n={n}")
        h = 1j**n * devectorize(term)
        if np.linalg.norm(h - h.conj().T) > 1e-10 * np.linalg.norm(term):
            out.append(f"hermiticity n={n}")
        prev = term
    if dep.n0:
        for k, (a, b) in enumerate(zip(continued_terms(seq, dep, 5), direct_terms(seq, dep, 5)), start=1):
            if np.linalg.norm(a - b) > 1e-8 * max(np.linalg.norm(b), 1e-300):
                out.append(f"continuation n0+{k}")
    other = companion_radius(dep, scale=2 * dep.scale)
    if not (rad.infinite and other.infinite) and abs(other.radius / rad.radius - 1) > 1e-8:
        out.append("rescaling")
    return out


def test_criterion_10_invariants():
    failures = {}
    for case in INVARIANT_CASES:
        bad = _invariant_failures(*case)
        if bad:
            failures[case] = bad
    record(10, not failures, f"{len(INVARIANT_CASES)} parameter points; failures: {failures}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
