"""
Perturbative NESS sequences, critical index, companion matrix and radius.

Two expansions share the same machinery:

* epsilon mode:  adH rho_n = -D rho_{n-1},   rho = sum (i eps)^n rho_n
* mu mode:       Tmu rho_n = -Dmu rho_{n-1}, rho = sum (i mu)^n rho_n

both started from rho_0 = I / 2^N. The sequence is generated until the image
of the newest term under the dissipator is a linear combination of the
earlier images; the combination coefficients fill the last column of the
companion matrix, whose spectral radius is the inverse convergence radius.

Stored terms are rescaled, rho~_n = s^-n rho_n, with s a power of two, so that
long sequences stay inside floating point range. Coefficients follow the same
convention: c~_j = c_j s^(j-1-n0).

Precision modes
---------------
``"exact"``   rational arithmetic in the balanced-magnetization sector
              (see :mod:`ness_radius.exact`); integer outputs are exact and
              the spectrum comes from certified polynomial root isolation.
``"double"``  float64 on the full Liouville space with residual checks.
``"auto"``    double first; falls back to exact when the double run is
              ill conditioned or fails to close.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla

from . import exact as ex
from .liouvillian import GeneratorBundle, build_dissipators
from .operators import Superoperator, SystemParams, devectorize, vectorize

log = logging.getLogger(__name__)

WARMUP = 8


class Mode(str, Enum):
    EPSILON = "epsilon"
    MU = "mu"


@dataclass(frozen=True)
class Tolerances:
    dep: float = 1e-8
    res: float = 1e-10
    null: float = 1e-10
    cond: float = 1e12
    # a double-precision dependence counts only if the fit residual drops by this factor at once
    gap: float = 1e-4


class ExpansionError(RuntimeError):
    pass


class UnsolvableStep(ExpansionError):
    pass


class NoDependenceFound(ExpansionError):
    def __init__(self, max_n: int, profile: Sequence[float] = ()):
        super().__init__(f"no dependence among images up to order {max_n}")
        self.max_n = max_n
        self.profile = list(profile)


class IllConditioned(ExpansionError):
    def __init__(self, order: int, condition: float, reason: str = ""):
        super().__init__(reason or f"image matrix condition number {condition:.3e} at order {order}")
        self.order = order
        self.condition = condition


class OutsideRadius(ExpansionError):
    pass


class IllConditionedWarning(RuntimeWarning):
    pass


def mode_maps(bundle: GeneratorBundle, mode: Union[Mode, str]) -> tuple[Superoperator, Superoperator]:
    """(map solved at each order, dissipator feeding the next order)."""
    mode = Mode(mode)
    if mode is Mode.EPSILON:
        return bundle.adH, bundle.D
    return bundle.Tmu, bundle.Dmu


# -- kernel handling (double precision) ---------------------------------------


def kernel_basis(A: Union[Superoperator, np.ndarray], tol: float = 1e-10) -> np.ndarray:
    """Orthonormal columns spanning the numerical kernel of A."""
    M = A.dense() if isinstance(A, Superoperator) else np.asarray(A)
    _, s, vh = sla.svd(M)
    if s.size == 0 or s[0] == 0:
        return np.eye(M.shape[1], dtype=complex)
    return vh[s <= tol * s[0]].conj().T


def _pinv_abs(M: np.ndarray, cutoff: float) -> np.ndarray:
    if M.size == 0:
        return M.conj().T
    u, s, vh = sla.svd(M)
    keep = s > cutoff
    return (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T


class StepSolver:
    """Solve A x = rhs with the kernel part of x fixed by next-order solvability.

    x = pinv(A) rhs + K alpha, where alpha makes Dn x orthogonal to Ker(A^dag).
    When that leaves freedom the minimum-norm alpha is used, which also keeps
    x orthogonal to the identity.
    """

    def __init__(self, A: np.ndarray, Dn: np.ndarray, tol: Tolerances = Tolerances()):
        self.tol = tol
        u, s, vh = sla.svd(A)
        keep = s > tol.null * s[0]
        self.pinv = (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T
        self.K = vh[~keep].conj().T
        self.W = u[:, ~keep]
        self.Dn = Dn
        self.dn_norm = float(np.linalg.norm(Dn, 2)) if Dn.size else 0.0
        self.G = self.W.conj().T @ Dn @ self.K
        self.G_pinv = _pinv_abs(self.G, tol.null * max(self.dn_norm, 1.0))

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        scale = np.linalg.norm(rhs)
        if scale == 0:
            return np.zeros_like(rhs)
        if self.W.size:
            leak = np.linalg.norm(self.W.conj().T @ rhs)
            if leak > self.tol.res * scale:
                raise UnsolvableStep(f"right-hand side leaves the range: relative component {leak / scale:.2e}")
        x = self.pinv @ rhs
        if self.K.size:
            b = self.W.conj().T @ (self.Dn @ x)
            alpha = -self.G_pinv @ b
            miss = np.linalg.norm(self.G @ alpha + b)
            ref = max(np.linalg.norm(b), self.dn_norm * np.linalg.norm(x))
            if miss > self.tol.res * ref:
                raise UnsolvableStep(f"kernel correction is inconsistent (residual {miss:.2e})")
            x = x + self.K @ alpha
        return x


def constrained_solve(
    A: Union[Superoperator, np.ndarray],
    rhs: np.ndarray,
    K: Optional[np.ndarray] = None,
    next_map: Union[Superoperator, np.ndarray, None] = None,
    tol: Tolerances = Tolerances(),
) -> np.ndarray:
    """One recurrence step; ``K`` is accepted for interface symmetry and recomputed."""
    A_d = A.dense() if isinstance(A, Superoperator) else np.asarray(A)
    if next_map is None:
        next_map = np.zeros_like(A_d)
    Dn = next_map.dense() if isinstance(next_map, Superoperator) else np.asarray(next_map)
    return StepSolver(A_d, Dn, tol)(np.asarray(rhs, dtype=complex))


# -- dependence detection ------------------------------------------------------


@dataclass
class DependenceCheck:
    dependent: bool
    coeffs: Optional[np.ndarray]
    residual: float
    condition: float


class ImageBasis:
    """Incremental QR of normalized image columns (Gram-Schmidt, two passes)."""

    def __init__(self, dim: int):
        self.Q = np.zeros((dim, 0), dtype=complex)
        self.R = np.zeros((0, 0), dtype=complex)
        self.norms: list[float] = []

    def __len__(self) -> int:
        return len(self.norms)

    def _project(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = np.zeros(self.Q.shape[1], dtype=complex)
        w = v.copy()
        for _ in range(2):
            g = self.Q.conj().T @ w
            w = w - self.Q @ g
            h += g
        return h, w

    def condition(self) -> float:
        if not self.norms:
            return 1.0
        sv = np.linalg.svd(self.R, compute_uv=False)
        return float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf

    def test(self, v: np.ndarray, tol: float = 1e-8, natural_scale: Optional[float] = None) -> DependenceCheck:
        nv = float(np.linalg.norm(v))
        ref = max(nv, natural_scale or 0.0)
        k = len(self)
        if ref == 0 or nv <= tol * ref:
            return DependenceCheck(True, np.zeros(k, dtype=complex), nv, self.condition())
        if k == 0:
            return DependenceCheck(False, None, nv, 1.0)
        h, w = self._project(v / nv)
        residual = float(np.linalg.norm(w)) * nv
        cond = self.condition()
        if residual <= tol * ref:
            y = sla.solve_triangular(self.R, h) * nv
            return DependenceCheck(True, y / np.array(self.norms), residual, cond)
        return DependenceCheck(False, None, residual, cond)

    def append(self, v: np.ndarray) -> None:
        nv = float(np.linalg.norm(v))
        if nv == 0:
            raise ValueError("cannot append a zero image")
        h, w = self._project(v / nv)
        r = float(np.linalg.norm(w))
        k = len(self)
        R = np.zeros((k + 1, k + 1), dtype=complex)
        R[:k, :k] = self.R
        R[:k, k] = h
        R[k, k] = r
        self.R = R
        self.Q = np.column_stack([self.Q, w / r])
        self.norms.append(nv)


def dependence_test(images: Sequence[np.ndarray], new: np.ndarray, tol: float = 1e-8) -> DependenceCheck:
    """Least-squares fit of ``new`` on ``images``; coefficients refer to the raw images."""
    if not images:
        return DependenceCheck(bool(np.linalg.norm(new) == 0), np.zeros(0, dtype=complex), float(np.linalg.norm(new)), 1.0)
    basis = ImageBasis(len(new))
    for img in images:
        basis.append(np.asarray(img, dtype=complex))
    check = basis.test(np.asarray(new, dtype=complex), tol)
    if check.condition > Tolerances().cond:
        warnings.warn(f"image matrix condition number {check.condition:.2e}", IllConditionedWarning, stacklevel=2)
    return check


# -- results -------------------------------------------------------------------


@dataclass
class ExpansionSequence:
    params: SystemParams
    mode: Mode
    terms: list  # rho~_1 .. rho~_n as 4^N vectors
    images: list  # Dn rho~_0 .. Dn rho~_n
    scale: float
    log_norms: list  # natural log of ||rho_n|| (unscaled), n = 0..
    precision: str
    exact_run: Optional[ex.ExactRun] = None
    solver: Optional[StepSolver] = None

    @property
    def rho0(self) -> np.ndarray:
        d = self.params.dim
        return vectorize(np.eye(d, dtype=complex) / d)

    def term(self, n: int) -> np.ndarray:
        return self.rho0 if n == 0 else self.terms[n - 1]


@dataclass
class DependenceResult:
    n0: int
    coeffs_scaled: np.ndarray  # c~_j at ``scale``
    scale: float
    fit_residual: float
    condition: float = 1.0
    exact_coeffs: Optional[list] = None  # real c'_j for sigma_n = i^n rho_n

    @property
    def coeffs(self) -> np.ndarray:
        """Unscaled c_j; large n0 may overflow to inf."""
        j = np.arange(1, self.n0 + 1)
        with np.errstate(over="ignore"):
            return self.coeffs_scaled * np.power(float(self.scale), (self.n0 - j + 1).astype(float))

    @property
    def all_zero(self) -> bool:
        if self.exact_coeffs is not None:
            return all(c == 0 for c in self.exact_coeffs)
        return bool(np.all(self.coeffs_scaled == 0))


def _log2_scale(scale: float) -> int:
    return int(round(math.log2(scale)))


def _auto_scale(log_norms: Sequence[float]) -> float:
    """Median growth ratio over the warm-up window, rounded to a power of two."""
    finite = [v for v in log_norms[: WARMUP + 1] if np.isfinite(v)]
    if len(finite) < 2:
        return 1.0
    ratios = np.diff(finite)
    return float(2.0 ** round(float(np.median(ratios)) / math.log(2)))


def _resolve_scale(scale, log_norms) -> float:
    if scale in (None, "auto"):
        return _auto_scale(log_norms)
    s = float(scale)
    if not s > 0:
        raise ValueError("scale must be positive")
    return float(2.0 ** round(math.log2(s)))


def _generate_exact(params, mode, max_n, scale) -> tuple[ExpansionSequence, DependenceResult]:
    try:
        run = ex.exact_sequence(params, mode.value, max_n=max_n)
    except ex.NoExactDependence as exc:
        raise NoDependenceFound(exc.max_n) from exc
    except ex.ExactArithmeticError as exc:
        raise UnsolvableStep(str(exc)) from exc
    log2_img = [ex.vector_log2_norm(y) for y in run.images]
    s = _resolve_scale(scale, [v * math.log(2) for v in log2_img])
    k = _log2_scale(s)
    n0 = run.n0
    phase = [(-1j) ** n for n in range(n0 + 1)]  # rho_n = (-i)^n sigma_n
    terms = [phase[n] * ex.sector_to_vec_scaled(run, run.sigmas[n], -k * n) for n in range(1, n0 + 1)]
    images = [phase[n] * ex.sector_to_vec_scaled(run, run.images[n], -k * n) for n in range(n0 + 1)]
    log_norms = [ex.vector_log2_norm(sig) * math.log(2) for sig in run.sigmas]
    coeffs_scaled = np.array(
        [
            ex._to_float_scaled(_fq(c), k * (j - 1 - n0)) * (-1j) ** (n0 - j + 1)
            for j, c in enumerate(run.coeffs, start=1)
        ],
        dtype=complex,
    )
    seq = ExpansionSequence(params, mode, terms, images, s, log_norms, "exact", exact_run=run)
    dep = DependenceResult(n0, coeffs_scaled, s, 0.0, 1.0, list(run.coeffs))
    return seq, dep


def _fq(c: Fraction):
    import flint

    return flint.fmpq(c.numerator, c.denominator)


def _generate_double(params, mode, max_n, tol, scale) -> tuple[ExpansionSequence, DependenceResult]:
    bundle = build_dissipators(params)
    A, Dn = mode_maps(bundle, mode)
    Dn_d = Dn.dense()
    solver = StepSolver(A.dense(), Dn_d, tol)
    d = params.dim
    rho0 = vectorize(np.eye(d, dtype=complex) / d)
    y = Dn_d @ rho0
    terms: list = []
    images: list = [y]
    log_norms = [math.log(np.linalg.norm(rho0))]
    s = 1.0
    fixed = scale not in (None, "auto")
    if fixed:
        s = _resolve_scale(scale, [])
    basis = ImageBasis(d * d)
    if np.linalg.norm(y) <= tol.dep * solver.dn_norm * np.linalg.norm(rho0):
        seq = ExpansionSequence(params, mode, terms, images, s, log_norms, "double", solver=solver)
        return seq, DependenceResult(0, np.zeros(0, dtype=complex), s, 0.0, 1.0)
    basis.append(y)
    profile = []
    prev_rel = 1.0
    for n in range(1, max_n + 1):
        rho = solver(-y) / s
        y = Dn_d @ rho
        terms.append(rho)
        images.append(y)
        norm_rho = float(np.linalg.norm(rho))
        log_norms.append(math.log(norm_rho) + n * math.log(s) if norm_rho > 0 else -math.inf)
        check = basis.test(y, tol.dep, natural_scale=solver.dn_norm * norm_rho)
        profile.append(check.residual)
        if check.condition > tol.cond:
            raise IllConditioned(n, check.condition)
        rel = check.residual / max(float(np.linalg.norm(y)), solver.dn_norm * norm_rho)
        if check.dependent and rel > tol.gap * prev_rel:
            raise IllConditioned(
                n, check.condition,
                f"fit residual decays gradually ({prev_rel:.2e} -> {rel:.2e} at order {n}); dependence is not sharp",
            )
        prev_rel = rel
        if check.dependent:
            if not fixed and n < WARMUP:
                s_new = _auto_scale(log_norms)
                terms, images, check = _rescale_double(terms, images, check, s_new / s)
                s = s_new
            seq = ExpansionSequence(params, mode, terms, images, s, log_norms, "double", solver=solver)
            return seq, DependenceResult(n, np.asarray(check.coeffs), s, check.residual, check.condition)
        basis.append(y)
        if not fixed and n == WARMUP:
            s_new = _auto_scale(log_norms)
            if s_new != s:
                terms, images, _ = _rescale_double(terms, images, None, s_new / s)
                basis = ImageBasis(d * d)
                for img in images:
                    basis.append(img)
                y = images[-1]
                s = s_new
    raise NoDependenceFound(max_n, profile)


def _rescale_double(terms, images, check, factor):
    terms = [t / factor ** (n + 1) for n, t in enumerate(terms)]
    images = [y / factor**n for n, y in enumerate(images)]
    if check is not None and check.coeffs is not None:
        n0 = len(check.coeffs)
        j = np.arange(1, n0 + 1)
        coeffs = check.coeffs * np.power(factor, (j - 1 - n0).astype(float))
        check = DependenceCheck(check.dependent, coeffs, check.residual, check.condition)
    return terms, images, check


def generate_sequence(
    params: SystemParams,
    mode: Union[Mode, str],
    max_n: int = 400,
    precision: str = "exact",
    tol: Tolerances = Tolerances(),
    scale: Union[str, float, None] = "auto",
) -> tuple[ExpansionSequence, DependenceResult]:
    """Build rho_1..rho_n0 and the dependence coefficients of the n0-th image."""
    mode = Mode(mode)
    if mode is Mode.MU and params.epsilon <= 0:
        raise ValueError("mu expansion needs epsilon > 0")
    if precision == "exact":
        return _generate_exact(params, mode, max_n, scale)
    if precision == "double":
        return _generate_double(params, mode, max_n, tol, scale)
    if precision == "auto":
        try:
            return _generate_double(params, mode, max_n, tol, scale)
        except (IllConditioned, NoDependenceFound, UnsolvableStep) as exc:
            log.info("double precision run failed (%s); switching to exact arithmetic", exc)
            return _generate_exact(params, mode, max_n, scale)
    raise ValueError(f"unknown precision {precision!r}")


# -- companion matrix and radius ----------------------------------------------


def companion_matrix(c: Sequence[complex]) -> np.ndarray:
    """Ones on the subdiagonal, ``c`` in the last column."""
    c = np.asarray(c, dtype=complex)
    n0 = c.size
    M = np.zeros((n0, n0), dtype=complex)
    if n0:
        M[np.arange(1, n0), np.arange(n0 - 1)] = 1
        M[:, -1] = c
    return M


@dataclass
class RadiusResult:
    n0: int
    spectrum: np.ndarray  # eigenvalues of the unscaled companion, repeated by multiplicity
    scaled_spectrum: np.ndarray
    radius: float  # inf when the series terminates
    scale: float
    max_eig_modulus: float  # largest |eigenvalue| of the scaled companion
    multiplicities: list = field(default_factory=list)  # (eigenvalue, multiplicity)
    eig_agreement: float = 0.0  # relative gap between the two spectral routes
    method: str = "float"

    @property
    def infinite(self) -> bool:
        return math.isinf(self.radius)


def _rescaled_coeffs(dep: DependenceResult, scale: float) -> np.ndarray:
    j = np.arange(1, dep.n0 + 1)
    factor = dep.scale / scale
    return dep.coeffs_scaled * np.power(factor, (dep.n0 - j + 1).astype(float))


def companion_radius(dep: DependenceResult, scale: Optional[float] = None, bits: int = 128) -> RadiusResult:
    """Spectrum of the companion matrix and radius 1 / (s max |z~|)."""
    s = float(dep.scale if scale is None else scale)
    if dep.n0 == 0 or dep.all_zero:
        zeros = np.zeros(dep.n0, dtype=complex)
        method = "exact" if dep.exact_coeffs is not None else "float"
        return RadiusResult(dep.n0, zeros, zeros, math.inf, s, 0.0, [(0j, dep.n0)] if dep.n0 else [], 0.0, method)
    if dep.exact_coeffs is not None and s == 2.0 ** round(math.log2(s)):
        k = _log2_scale(s)
        poly = ex.companion_polynomial(dep.exact_coeffs, k)
        roots = ex.certified_roots(poly, bits)
        # roots belong to the sigma convention; the rho convention rotates by -i
        mult = [(-1j * z, m) for z, m, _ in roots]
        scaled = np.array([z for z, m in mult for _ in range(m)], dtype=complex)
        top = max(abs(z) for z, _ in mult)
        moduli = ex.companion_eigen_moduli(poly, bits)
        agreement = abs(max(moduli) - top) / top
        if agreement > 1e-8:
            raise ExpansionError(f"eigenvalue routes disagree (relative gap {agreement:.2e})")
        method = "certified"
        mult = [(z * s, m) for z, m in mult]
    else:
        c = _rescaled_coeffs(dep, s)
        M = companion_matrix(c)
        scaled = np.linalg.eigvals(M)
        roots = np.roots(np.concatenate([[1.0], -c[::-1]]))
        top = float(np.abs(scaled).max())
        top_roots = float(np.abs(roots).max()) if roots.size else 0.0
        agreement = abs(top - top_roots) / top if top else 0.0
        if agreement > 1e-8:
            warnings.warn(f"companion eigenvalues and polynomial roots differ by {agreement:.2e}", IllConditionedWarning, stacklevel=2)
        mult = [(z * s, 1) for z in scaled]
        method = "float"
    radius = math.inf if top == 0 else 1.0 / (s * top)
    return RadiusResult(dep.n0, scaled * s, scaled, radius, s, float(top), mult, float(agreement), method)


def propagate_R(dep: DependenceResult, n: int, scaled: bool = False) -> np.ndarray:
    """Coordinates of rho_n in the basis rho_1..rho_n0 (R^(n) = M^(n-1) R^(1))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    c = dep.coeffs_scaled if scaled else dep.coeffs
    M = companion_matrix(c)
    R = np.zeros(dep.n0, dtype=complex)
    R[0] = 1
    for _ in range(n - 1):
        R = M @ R
    return R


def continued_terms(seq: ExpansionSequence, dep: DependenceResult, count: int) -> list:
    """Scaled rho~_n for n0 < n <= n0 + count from the companion recurrence."""
    basis = np.column_stack(seq.terms[: dep.n0]) if dep.n0 else None
    out = []
    M = companion_matrix(dep.coeffs_scaled)
    R = np.zeros(dep.n0, dtype=complex)
    if dep.n0:
        R[-1] = 1  # rho~_n0
    for _ in range(count):
        if dep.n0 == 0:
            out.append(np.zeros_like(seq.rho0))
            continue
        R = M @ R
        out.append(basis @ R)
    return out


def direct_terms(seq: ExpansionSequence, dep: DependenceResult, count: int) -> list:
    """Scaled rho~_n for n0 < n <= n0 + count by solving the recurrence again."""
    s = seq.scale
    if seq.exact_run is not None:
        k = _log2_scale(s)
        sigmas = ex.exact_continuation(seq.exact_run, count)
        return [
            (-1j) ** n * ex.sector_to_vec_scaled(seq.exact_run, sig, -k * n)
            for n, sig in enumerate(sigmas, start=dep.n0 + 1)
        ]
    out = []
    y = seq.images[dep.n0]
    Dn = seq.solver.Dn
    for _ in range(count):
        rho = seq.solver(-y) / s
        y = Dn @ rho
        out.append(rho)
    return out


# -- reconstruction ------------------------------------------------------------


@dataclass
class ResolventState:
    Rinf: np.ndarray  # coordinates of rho_inf - rho_0 on the stored (scaled) terms
    rho_inf: np.ndarray
    value: float
    residual: float


def resolvent_reconstruct(
    seq: ExpansionSequence,
    dep: DependenceResult,
    radius: RadiusResult,
    value: Union[float, Fraction],
    allow_outside: bool = False,
) -> ResolventState:
    """Sum the series in closed form, (1 - i v M)^-1 applied to R^(1)."""
    v = float(value)
    if abs(v) >= radius.radius and not allow_outside:
        raise OutsideRadius(f"|value| = {abs(v)} is not inside the radius {radius.radius}")
    n0, s = dep.n0, seq.scale
    rho0 = devectorize(seq.rho0)
    if n0 == 0 or v == 0:
        return ResolventState(np.zeros(n0, dtype=complex), rho0, v, 0.0)
    x = 1j * v * s
    M = companion_matrix(dep.coeffs_scaled)
    lhs = np.eye(n0) - x * M
    e1 = np.zeros(n0, dtype=complex)
    e1[0] = 1
    if seq.exact_run is not None:
        vq = value if isinstance(value, Fraction) else Fraction(v)
        total, R_exact = ex.exact_resolvent(seq.exact_run, vq, with_coords=True)
        k = _log2_scale(s)
        Rinf = np.array(
            [ex._to_float_scaled(R_exact[j], k * (j + 1)) * 1j ** (j + 1) for j in range(n0)],
            dtype=complex,
        )
        rho = devectorize(ex.sector_to_vec_scaled(seq.exact_run, total, 0))
    else:
        Rinf = np.linalg.solve(lhs, x * e1)
        rho = rho0 + devectorize(np.column_stack(seq.terms[:n0]) @ Rinf)
    with np.errstate(over="ignore", invalid="ignore"):
        resid = float(np.linalg.norm(lhs @ Rinf - x * e1))
    return ResolventState(Rinf, rho, v, resid)


def truncated_series(seq: ExpansionSequence, dep: DependenceResult, value: float, order: int) -> np.ndarray:
    """Partial sum sum_{n<=order} (i v)^n rho_n as an operator."""
    x = 1j * float(value) * seq.scale
    total = seq.rho0.copy()
    stored = min(order, dep.n0)
    for n in range(1, stored + 1):
        total = total + x**n * seq.terms[n - 1]
    if order > dep.n0:
        extra = continued_terms(seq, dep, order - dep.n0)
        for n, t in enumerate(extra, start=dep.n0 + 1):
            total = total + x**n * t
    return devectorize(total)


def polynomial_numerator(seq: ExpansionSequence, dep: DependenceResult, order: int) -> list:
    """Scaled coefficients of P(x) = Q(x) rho_inf(x), x = i v.

    Q(x) = 1 - sum_j c_j x^(n0-j+1) is the reciprocal companion polynomial, so
    P has degree at most n0 and rho_inf = P / Q = P / tr P.
    """
    n0 = dep.n0
    c = dep.coeffs_scaled
    out = []
    for n in range(order + 1):
        if n <= n0:
            p = seq.term(n).copy()
        else:
            p = continued_terms(seq, dep, n - n0)[-1]
        for j in range(1, n0 + 1):
            m = n - (n0 - j + 1)
            if m >= 0:
                src = seq.term(m) if m <= n0 else continued_terms(seq, dep, m - n0)[-1]
                p = p - c[j - 1] * src
        out.append(p)
    return out


def series_terms(seq: ExpansionSequence, dep: DependenceResult, order: int) -> list:
    """Scaled rho~_0 .. rho~_order, continuing past n0 with the companion recurrence."""
    out = [seq.term(n) for n in range(min(order, dep.n0) + 1)]
    if order > dep.n0:
        out += continued_terms(seq, dep, order - dep.n0)
    return out
