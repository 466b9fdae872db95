from fractions import Fraction
from math import comb

import flint
import numpy as np
import pytest

from ness_radius import exact as ex
from ness_radius.liouvillian import build_dissipators
from ness_radius.operators import SystemParams


@pytest.mark.parametrize("N", [2, 3, 4])
def test_sector_size(N):
    assert ex.sector_basis(N).size == comb(2 * N, N)


@pytest.mark.parametrize("N", [2, 3])
def test_sector_restriction_matches_full_maps(N):
    basis = ex.sector_basis(N)
    E = basis.embedding()
    parts = ex.sector_parts(N)
    b = build_dissipators(SystemParams(N, 0, 1, 1))
    rng = np.random.default_rng(N)
    x = rng.normal(size=basis.size)
    v = E @ x
    # D+ maps the sector into itself with integer matrix entries
    assert np.allclose(b.Dplus.matrix @ v, E @ (parts["Dplus"] @ x))
    # adH parts are stored as -i ad
    h_xy = -1j * (b.adH.matrix @ v)
    assert np.allclose(h_xy, E @ (parts["adH_xy"] @ x))


def test_rational_reconstruction():
    m = ex.PRIMES[0]
    x = Fraction(-7, 12)
    a = x.numerator * pow(x.denominator, -1, m) % m
    assert ex._rational_reconstruct(a, m) == x
    assert ex._crt(2, 3, 3, 5) % 15 == 8


def test_companion_polynomial_scaling():
    # c = (-1/4, 0): z^2 + 1/4; at scale 2 the roots halve
    poly = ex.companion_polynomial([Fraction(-1, 4), Fraction(0)])
    assert poly == flint.fmpq_poly([flint.fmpq(1, 4), 0, 1])
    scaled = ex.companion_polynomial([Fraction(-1, 4), Fraction(0)], log2_scale=1)
    roots = ex.certified_roots(scaled)
    assert sorted(abs(z) for z, _, _ in roots) == pytest.approx([0.25, 0.25])


def test_certified_roots_multiplicity():
    poly = flint.fmpq_poly([flint.fmpq(1, 16), 0, flint.fmpq(1, 2), 0, 1])  # (z^2 + 1/4)^2
    roots = ex.certified_roots(poly)
    assert sorted(m for _, m, _ in roots) == [2, 2]
    assert all(r < 1e-30 for _, _, r in roots)
    assert max(ex.companion_eigen_moduli(poly)) == pytest.approx(0.5, rel=1e-12)


@pytest.mark.parametrize(
    "args, n0, coeffs",
    [
        ((2, "1/2", "1/2", "epsilon"), 2, [Fraction(-1, 4), Fraction(0)]),
        ((2, 1, 0, "mu"), 2, [Fraction(0), Fraction(0)]),
        ((3, 0, "1/2", "epsilon"), 4, [Fraction(-1, 16), Fraction(0), Fraction(-1, 2), Fraction(0)]),
    ],
)
def test_exact_sequence_small(args, n0, coeffs):
    N, delta, mu, mode = args
    run = ex.exact_sequence(SystemParams(N, delta, 1, mu), mode)
    assert run.n0 == n0
    assert run.coeffs == coeffs
    assert ex._verify_relation(run.images[:-1], run.images[-1], run.coeffs)


def test_exact_sequence_cap():
    with pytest.raises(ex.NoExactDependence):
        ex.exact_sequence(SystemParams(3, "1/2", 1, "1/2"), "epsilon", max_n=3)


def test_exact_terms_are_trace_free():
    run = ex.exact_sequence(SystemParams(3, "1/2", 1, "1/2"), "epsilon")
    diag = ex.sector_basis(3).diagonal
    for sigma in run.sigmas[1:]:
        assert sum(sigma[int(k), 0] for k in diag) == 0


def test_vector_log2_norm():
    col = flint.fmpq_mat(2, 1, [3, 4])
    assert ex.vector_log2_norm(col) == pytest.approx(np.log2(5))
    assert ex.vector_log2_norm(flint.fmpq_mat(2, 1)) == float("-inf")
