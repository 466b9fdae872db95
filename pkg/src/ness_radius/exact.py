"""
Exact rational engine for the perturbative recurrences.

Both recurrences preserve the magnetization-balanced sector (operators
|a><b| with equal numbers of up spins in a and b), and after the substitution
sigma_n = i^n rho_n they become real: with A the mode's map and Dn its
dissipator,

    (-i A) sigma_n = -Dn sigma_{n-1}

where -i A and Dn preserve Hermiticity. In the Hermitian basis
{E_aa, E_ab + E_ba, i(E_ab - E_ba)} every matrix involved has rational
entries, so the whole sequence, the critical index and the recurrence
coefficients are computed without rounding, on a space of dimension
binom(2N, N) instead of 4^N.

Linear dependence is located with ranks modulo a 62-bit prime; the
coefficients are recovered from several primes by rational reconstruction
and then checked exactly, so a reported relation always holds over Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import flint
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .liouvillian import dissipator_pair
from .operators import SystemParams, ad_superoperator, hamiltonian_parts

EPSILON_MODE = "epsilon"
MU_MODE = "mu"


class ExactArithmeticError(ArithmeticError):
    pass


def _prime_list(count: int, start: int = 2**62) -> list[int]:
    primes = []
    p = start - 1
    while len(primes) < count:
        if flint.fmpz(p).is_prime():
            primes.append(p)
        p -= 2
    return primes


PRIMES = tuple(_prime_list(64))


# -- sector basis ------------------------------------------------------------


@dataclass(frozen=True)
class SectorBasis:
    """Hermitian basis of the balanced-magnetization operator sector."""

    N: int
    elements: tuple  # (a, b, kind) with kind in {"d", "r", "i"}

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def diagonal(self) -> np.ndarray:
        return np.array([k for k, (_, _, t) in enumerate(self.elements) if t == "d"])

    def embedding(self) -> sp.csr_matrix:
        """Sparse 4^N x size matrix sending real coordinates to vec(X)."""
        d = 2**self.N
        rows, cols, vals = [], [], []
        for k, (a, b, t) in enumerate(self.elements):
            if t == "d":
                rows.append(a + a * d); cols.append(k); vals.append(1.0)
            elif t == "r":
                rows += [a + b * d, b + a * d]; cols += [k, k]; vals += [1.0, 1.0]
            else:
                rows += [a + b * d, b + a * d]; cols += [k, k]; vals += [1j, -1j]
        return sp.csr_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(d * d, self.size))

    def coordinate_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """vec indices read by each coordinate and whether the imaginary part is taken."""
        d = 2**self.N
        idx = np.array([a + b * d for a, b, _ in self.elements])
        imag = np.array([t == "i" for _, _, t in self.elements])
        return idx, imag

    def to_vec(self, coords: np.ndarray) -> np.ndarray:
        return self.embedding() @ np.asarray(coords, dtype=complex)


@lru_cache(maxsize=None)
def sector_basis(N: int) -> SectorBasis:
    d = 2**N
    weight = [bin(a).count("1") for a in range(d)]
    elements = []
    for a in range(d):
        for b in range(a, d):
            if weight[a] != weight[b]:
                continue
            if a == b:
                elements.append((a, a, "d"))
            else:
                elements.append((a, b, "r"))
                elements.append((a, b, "i"))
    return SectorBasis(N, tuple(elements))


def _restrict(S: sp.spmatrix, basis: SectorBasis) -> np.ndarray:
    """Integer matrix of a Hermiticity-preserving superoperator in the sector basis."""
    P = basis.embedding()
    Y = (S @ P).tocsr()
    idx, imag = basis.coordinate_rows()
    in_sector = np.zeros(Y.shape[0], dtype=bool)
    in_sector[idx] = True
    d = 2**basis.N
    in_sector[[b + a * d for a, b, _ in basis.elements]] = True
    leak = Y[~in_sector]
    if leak.nnz and np.abs(leak.data).max() > 0:
        raise ExactArithmeticError("superoperator leaves the balanced-magnetization sector")
    block = Y[idx].toarray()
    out = np.where(imag[:, None], block.imag, block.real)
    rounded = np.rint(out)
    if np.abs(out - rounded).max() > 1e-9:
        raise ExactArithmeticError("sector matrix is not integer valued")
    return rounded.astype(np.int64)


@lru_cache(maxsize=8)
def sector_parts(N: int) -> dict[str, np.ndarray]:
    """Integer sector matrices of -i adH_xy, -i adH_zz, D+ and D-."""
    basis = sector_basis(N)
    h_xy, h_zz = hamiltonian_parts(N)
    d_plus, d_minus = dissipator_pair(N)
    parts = {
        "adH_xy": _restrict(-1j * ad_superoperator(h_xy).matrix, basis),
        "adH_zz": _restrict(-1j * ad_superoperator(h_zz).matrix, basis),
        "Dplus": _restrict(d_plus.matrix, basis),
        "Dminus": _restrict(d_minus.matrix, basis),
    }
    for arr in parts.values():
        arr.setflags(write=False)
    return parts


# -- rational linear algebra -------------------------------------------------


def _fmpq_matrix(numerators: np.ndarray, denominator: int) -> flint.fmpq_mat:
    r, c = numerators.shape
    den = int(denominator)
    return flint.fmpq_mat(r, c, [flint.fmpq(int(x), den) for x in numerators.ravel()])


def _column(values) -> flint.fmpq_mat:
    values = list(values)
    return flint.fmpq_mat(len(values), 1, values)


def _pivot_columns(rref: flint.fmpq_mat, rank: int) -> list[int]:
    pivots = []
    ncols = rref.ncols()
    col = 0
    for i in range(rank):
        while rref[i, col] == 0:
            col += 1
        pivots.append(col)
        col += 1
        if col > ncols:
            break
    return pivots


def _kernel_from_rref(rref: flint.fmpq_mat, rank: int, ncols: int) -> list[list]:
    pivots = _pivot_columns(rref, rank)
    free = [j for j in range(ncols) if j not in set(pivots)]
    vectors = []
    for f in free:
        v = [flint.fmpq(0)] * ncols
        v[f] = flint.fmpq(1)
        for i, pj in enumerate(pivots):
            v[pj] = -rref[i, f]
        vectors.append(v)
    return vectors


@dataclass
class _Block:
    index: np.ndarray
    rows: list[int]  # pivot rows (local)
    cols: list[int]  # pivot columns (local)
    inverse: Optional[flint.fmpq_mat]
    kernel: list[list]
    left_kernel: list[list]


class RationalSolver:
    """Generalized inverse, kernel and left kernel of a sparse-ish rational matrix.

    The matrix is split into the connected components of its sparsity graph;
    each component is handled by exact row reduction.
    """

    def __init__(self, numerators: np.ndarray, denominator: int):
        self.n = numerators.shape[0]
        pattern = sp.csr_matrix((numerators != 0) | (numerators.T != 0))
        ncomp, labels = connected_components(pattern, directed=False)
        self.blocks: list[_Block] = []
        for comp in range(ncomp):
            index = np.flatnonzero(labels == comp)
            sub = _fmpq_matrix(numerators[np.ix_(index, index)], denominator)
            rref, rank = sub.rref()
            cols = _pivot_columns(rref, rank)
            kernel = _kernel_from_rref(rref, rank, len(index))
            rref_t, rank_t = sub.transpose().rref()
            rows = _pivot_columns(rref_t, rank_t)
            left_kernel = _kernel_from_rref(rref_t, rank_t, len(index))
            inverse = None
            if rank:
                core = flint.fmpq_mat([[sub[i, j] for j in cols] for i in rows])
                inverse = core.inv()
            self.blocks.append(_Block(index, rows, cols, inverse, kernel, left_kernel))

    def _embed(self, vectors_by_block) -> flint.fmpq_mat:
        cols = []
        for block, vectors in vectors_by_block:
            for v in vectors:
                full = [flint.fmpq(0)] * self.n
                for loc, glob in enumerate(block.index):
                    full[glob] = v[loc]
                cols.append(full)
        if not cols:
            return flint.fmpq_mat(self.n, 0)
        return flint.fmpq_mat([[c[i] for c in cols] for i in range(self.n)])

    def kernel(self) -> flint.fmpq_mat:
        return self._embed((b, b.kernel) for b in self.blocks)

    def left_kernel(self) -> flint.fmpq_mat:
        return self._embed((b, b.left_kernel) for b in self.blocks)

    def particular(self, rhs: list) -> list:
        """Some x with A x = rhs, assuming rhs lies in the range."""
        x = [flint.fmpq(0)] * self.n
        for b in self.blocks:
            if b.inverse is None:
                continue
            local = _column(rhs[b.index[r]] for r in b.rows)
            sol = b.inverse * local
            for k, c in enumerate(b.cols):
                x[b.index[c]] = sol[k, 0]
        return x


def _is_zero(M: flint.fmpq_mat) -> bool:
    return not any(M.entries())


def _as_list(col: flint.fmpq_mat) -> list:
    return [col[i, 0] for i in range(col.nrows())]


# -- the exact recurrence ----------------------------------------------------


def _pow2_fraction(exponent: int) -> flint.fmpq:
    if exponent >= 0:
        return flint.fmpq(2**exponent)
    return flint.fmpq(1, 2 ** (-exponent))


def _to_float_scaled(x: flint.fmpq, log2_scale: int) -> float:
    """float(x * 2**log2_scale) without intermediate overflow."""
    p, q = int(x.p), int(x.q)
    if log2_scale >= 0:
        p <<= log2_scale
    else:
        q <<= -log2_scale
    return p / q


class ExactSystem:
    """Sector matrices of one (params, mode) pair, with the step solver prepared."""

    def __init__(self, params: SystemParams, mode: str):
        if mode not in (EPSILON_MODE, MU_MODE):
            raise ValueError(f"unknown mode {mode!r}")
        self.params = params
        self.mode = mode
        self.basis = sector_basis(params.N)
        parts = sector_parts(params.N)
        delta, mu, eps = params.delta, params.mu, params.epsilon
        if mode == EPSILON_MODE:
            a_coeffs = {"adH_xy": Fraction(1), "adH_zz": delta}
            d_coeffs = {"Dplus": (1 + mu) / 2, "Dminus": (1 - mu) / 2}
        else:
            a_coeffs = {"adH_xy": Fraction(1), "adH_zz": delta, "Dplus": eps / 2, "Dminus": eps / 2}
            d_coeffs = {"Dplus": eps / 2, "Dminus": -eps / 2}
        a_num, a_den = self._combine(parts, a_coeffs)
        d_num, d_den = self._combine(parts, d_coeffs)
        self.A = _fmpq_matrix(a_num, a_den)
        self.Dn = _fmpq_matrix(d_num, d_den)
        self.solver = RationalSolver(a_num, a_den)
        self.K = self.solver.kernel()
        self.W = self.solver.left_kernel()
        self.Wt = self.W.transpose()
        G = self.Wt * self.Dn * self.K
        self.G = G
        self.G_solver = RationalSolver(*self._integerize(G)) if G.nrows() else None
        if G.nrows():
            ker_G = G.nrows() - G.rank()
            if ker_G > 1:
                raise ExactArithmeticError(
                    f"restricted dissipator has a {ker_G}-dimensional kernel; the kernel components "
                    "of the series are not fixed by the next-order solvability condition"
                )
        self.dim = 2**params.N
        self.diag = self.basis.diagonal

    @staticmethod
    def _combine(parts, coeffs) -> tuple[np.ndarray, int]:
        den = math.lcm(*[c.denominator for c in coeffs.values()])
        num = np.zeros_like(next(iter(parts.values())), dtype=object)
        for name, c in coeffs.items():
            num = num + parts[name].astype(object) * int(c * den)
        return num, den

    @staticmethod
    def _integerize(M: flint.fmpq_mat) -> tuple[np.ndarray, int]:
        entries = M.entries()
        den = math.lcm(*[int(e.q) for e in entries]) if entries else 1
        num = np.array([int(e.p) * (den // int(e.q)) for e in entries], dtype=object)
        return num.reshape(M.nrows(), M.ncols()), den

    @property
    def sigma0(self) -> flint.fmpq_mat:
        vals = [flint.fmpq(0)] * self.basis.size
        for k in self.diag:
            vals[k] = flint.fmpq(1, self.dim)
        return _column(vals)

    def step(self, prev_image: flint.fmpq_mat) -> flint.fmpq_mat:
        """Solve (-iA) sigma = -prev_image with the solvability-fixed kernel part."""
        rhs = -prev_image
        if self.W.ncols() and not _is_zero(self.Wt * rhs):
            raise ExactArithmeticError("right-hand side has a component outside the range of the map")
        x = _column(self.solver.particular(_as_list(rhs)))
        if self.K.ncols():
            b = self.Wt * (self.Dn * x)
            alpha = _column(self.G_solver.particular(_as_list(-b)))
            if not _is_zero(self.G * alpha + b):
                raise ExactArithmeticError("kernel correction system is inconsistent")
            x = x + self.K * alpha
        trace = sum((x[int(k), 0] for k in self.diag), flint.fmpq(0))
        if trace != 0:
            shift = trace / self.dim
            vals = _as_list(x)
            for k in self.diag:
                vals[int(k)] -= shift
            x = _column(vals)
        return x

    def image(self, sigma: flint.fmpq_mat) -> flint.fmpq_mat:
        return self.Dn * sigma


def _residues(col: flint.fmpq_mat, p: int) -> list[int]:
    out = []
    for i in range(col.nrows()):
        x = col[i, 0]
        out.append(int(x.p) * pow(int(x.q), -1, p) % p)
    return out


def _rational_reconstruct(a: int, m: int) -> Optional[Fraction]:
    """Find r/s = a mod m with |r|, s <= sqrt(m/2), or None."""
    a %= m
    bound = math.isqrt(m // 2)
    r0, r1 = m, a
    s0, s1 = 0, 1
    while r1 > bound:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        s0, s1 = s1, s0 - q * s1
    if s1 == 0 or abs(s1) > bound:
        return None
    if s1 < 0:
        r1, s1 = -r1, -s1
    if math.gcd(r1, s1) != 1:
        return None
    return Fraction(r1, s1)


def _solve_relation(images: list, new: flint.fmpq_mat, rows: list[int]) -> Optional[list[Fraction]]:
    """Exact c with new = sum_j c_j images[j], recovered multi-modularly and verified."""
    k = len(images)
    current: Optional[list[int]] = None
    modulus = 1
    previous = None
    for p in PRIMES:
        try:
            Y = flint.nmod_mat([[_residue(images[j][r, 0], p) for j in range(k)] for r in rows], p)
            rhs = flint.nmod_mat([[_residue(new[r, 0], p)] for r in rows], p)
            sol = Y.solve(rhs)
        except (ZeroDivisionError, ValueError):
            continue
        sol_ints = [int(sol[j, 0]) for j in range(k)]
        if current is None:
            current = sol_ints
        else:
            current = [_crt(a, modulus, b, p) for a, b in zip(current, sol_ints)]
        modulus *= p
        candidate = [_rational_reconstruct(v, modulus) for v in current]
        if any(c is None for c in candidate):
            previous = None
            continue
        if candidate == previous and _verify_relation(images, new, candidate):
            return candidate
        previous = candidate
    return None


def _residue(x: flint.fmpq, p: int) -> int:
    q = int(x.q) % p
    if q == 0:
        raise ZeroDivisionError
    return int(x.p) * pow(q, -1, p) % p


def _crt(a: int, m: int, b: int, p: int) -> int:
    t = (b - a) * pow(m, -1, p) % p
    return a + m * t


def _verify_relation(images: list, new: flint.fmpq_mat, coeffs: list[Fraction]) -> bool:
    acc = flint.fmpq_mat(new.nrows(), 1)
    for c, img in zip(coeffs, images):
        if c:
            acc = acc + img * flint.fmpq(c.numerator, c.denominator)
    return acc == new


@dataclass
class ExactRun:
    """Exact sequence sigma_0..sigma_n0, images Dn sigma_0..Dn sigma_n0 and coefficients.

    ``coeffs`` are real rationals c'_j with Dn sigma_n0 = sum_j c'_j Dn sigma_{j-1}.
    """

    system: ExactSystem
    sigmas: list
    images: list
    n0: int
    coeffs: list[Fraction]
    rank_profile: list[int] = field(default_factory=list)


class NoExactDependence(RuntimeError):
    def __init__(self, max_n: int):
        super().__init__(f"no linear dependence among the first {max_n + 1} images")
        self.max_n = max_n


def exact_sequence(params: SystemParams, mode: str, max_n: int = 400, system: ExactSystem | None = None) -> ExactRun:
    """Run the recurrence until the newest image depends on the earlier ones."""
    system = system or ExactSystem(params, mode)
    p = PRIMES[0]
    sigma = system.sigma0
    image = system.image(sigma)
    sigmas, images = [sigma], [image]
    if _is_zero(image):
        return ExactRun(system, sigmas, images, 0, [], [0])
    residue_cols = [_residues(image, p)]
    ranks = [1]
    n = system.basis.size
    for step in range(1, max_n + 1):
        sigma = system.step(image)
        image = system.image(sigma)
        sigmas.append(sigma)
        images.append(image)
        residue_cols.append(_residues(image, p))
        k = len(residue_cols)
        M = flint.nmod_mat(k, n, [v for col in residue_cols for v in col], p)
        rank = M.rank()
        ranks.append(rank)
        if rank == k:
            continue
        prior = flint.nmod_mat(k - 1, n, [v for col in residue_cols[:-1] for v in col], p)
        rref, r = prior.rref()
        rows = _pivot_columns(rref, r)
        coeffs = _solve_relation(images[:-1], image, rows)
        if coeffs is None:
            # dependence only modulo p; the rational images are independent
            continue
        return ExactRun(system, sigmas, images, step, coeffs, ranks)
    raise NoExactDependence(max_n)


def companion_polynomial(coeffs: list[Fraction], log2_scale: int = 0) -> flint.fmpq_poly:
    """z^n0 - sum_j c_j s^(j-1-n0) z^(j-1) with s = 2**log2_scale."""
    n0 = len(coeffs)
    poly = []
    for j, c in enumerate(coeffs, start=1):
        scaled = flint.fmpq(c.numerator, c.denominator) * _pow2_fraction(log2_scale * (j - 1 - n0))
        poly.append(-scaled)
    poly.append(flint.fmpq(1))
    return flint.fmpq_poly(poly)


def certified_roots(poly: flint.fmpq_poly, bits: int = 128) -> list[tuple[complex, int, float]]:
    """Isolated complex roots as (midpoint, multiplicity, enclosure radius)."""
    if poly.degree() <= 0:
        return []
    with flint.ctx.workprec(bits):
        roots = poly.complex_roots()
        out = []
        for z, mult in roots:
            mid = complex(float(z.real.mid()), float(z.imag.mid()))
            rad = float(max(z.real.rad(), z.imag.rad()))
            out.append((mid, int(mult), rad))
    return out


def companion_eigen_moduli(poly: flint.fmpq_poly, bits: int = 128) -> list[float]:
    """Moduli of the eigenvalues of the companion of the squarefree part (ball arithmetic)."""
    if poly.degree() <= 0:
        return []
    squarefree = poly / poly.gcd(poly.derivative())
    n = squarefree.degree()
    lead = squarefree[n]
    with flint.ctx.workprec(bits):
        M = flint.acb_mat(n, n)
        for j in range(1, n):
            M[j, j - 1] = 1
        for j in range(n):
            M[j, n - 1] = -squarefree[j] / lead
        eig = M.eig(algorithm="rump", nonstop=True)
        return [float(abs(e).mid()) for e in eig]


def exact_continuation(run: ExactRun, count: int) -> list:
    """Further sigma terms obtained by solving the recurrence directly."""
    sigmas = []
    image = run.images[-1]
    for _ in range(count):
        sigma = run.system.step(image)
        image = run.system.image(sigma)
        sigmas.append(sigma)
    return sigmas


def exact_resolvent(run: ExactRun, value: Fraction, with_coords: bool = False):
    """Sector coordinates of sigma_0 + sum_j R_j sigma_j with R = v (1 - v M)^-1 e1.

    With ``with_coords`` the exact R_j are returned as well.
    """
    n0 = run.n0
    total = run.sigmas[0]
    if n0 == 0 or value == 0:
        zero = [flint.fmpq(0)] * n0
        return (total, zero) if with_coords else total
    v = flint.fmpq(value.numerator, value.denominator)
    system = flint.fmpq_mat(n0, n0)
    for j in range(n0):
        system[j, j] = 1
    for j in range(1, n0):
        system[j, j - 1] = -v
    for j, c in enumerate(run.coeffs):
        system[j, n0 - 1] = system[j, n0 - 1] - v * flint.fmpq(c.numerator, c.denominator)
    rhs = flint.fmpq_mat(n0, 1)
    rhs[0, 0] = v
    R = system.solve(rhs)
    for j in range(n0):
        total = total + run.sigmas[j + 1] * R[j, 0]
    if with_coords:
        return total, [R[j, 0] for j in range(n0)]
    return total


def sector_to_vec_scaled(run: ExactRun, sigma: flint.fmpq_mat, log2_scale: int) -> np.ndarray:
    coords = np.array([_to_float_scaled(sigma[i, 0], log2_scale) for i in range(sigma.nrows())])
    return run.system.basis.to_vec(coords)


def vector_log2_norm(col: flint.fmpq_mat) -> float:
    """log2 of the Euclidean norm of a rational vector (-inf for zero)."""
    logs = []
    for i in range(col.nrows()):
        x = col[i, 0]
        if x != 0:
            logs.append(int(abs(x.p)).bit_length() - int(x.q).bit_length())
    if not logs:
        return float("-inf")
    top = max(logs)
    vals = [_to_float_scaled(col[i, 0], -top) for i in range(col.nrows())]
    return float(np.log2(np.linalg.norm(vals))) + top
