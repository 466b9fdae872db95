"""Boundary dissipators, the full Lindblad generator and the direct steady state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .operators import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    Superoperator,
    SystemParams,
    ad_superoperator,
    build_hamiltonian,
    devectorize,
    lindblad_dissipator,
    site_operator,
    vectorize,
)

TAU_NULL = 1e-10
PSD_TOL = 1e-10


class NessError(RuntimeError):
    pass


class NonUniqueNess(NessError):
    """More than one numerically null direction: uniqueness fails or tolerance is off."""


class NoSteadyState(NessError):
    pass


def dissipator_pair(N: int) -> tuple[Superoperator, Superoperator]:
    """D+ (source at site 0, sink at site N-1) and D- (the reverse)."""
    first_up = site_operator(SIGMA_PLUS, 0, N)
    first_down = site_operator(SIGMA_MINUS, 0, N)
    last_up = site_operator(SIGMA_PLUS, N - 1, N)
    last_down = site_operator(SIGMA_MINUS, N - 1, N)
    d_plus = lindblad_dissipator(first_up) + lindblad_dissipator(last_down)
    d_minus = lindblad_dissipator(first_down) + lindblad_dissipator(last_up)
    return Superoperator(d_plus.tocsr(), "Dplus"), Superoperator(d_minus.tocsr(), "Dminus")


@dataclass(frozen=True)
class GeneratorBundle:
    params: SystemParams
    adH: Superoperator
    Dplus: Superoperator
    Dminus: Superoperator
    D: Superoperator
    D0: Superoperator
    Dmu: Superoperator
    Tmu: Superoperator
    full: Superoperator


def build_dissipators(params: SystemParams) -> GeneratorBundle:
    """All superoperators needed by both expansions, built from one parameter set.

    D   = (1+mu)/2 D+ + (1-mu)/2 D-
    D0  = eps/2 (D+ + D-),  Dmu = eps/2 (D+ - D-),  so eps D = D0 + mu Dmu
    Tmu = adH + i D0
    full = -i adH + eps D
    """
    H = build_hamiltonian(params)
    adH = ad_superoperator(H, "adH")
    d_plus, d_minus = dissipator_pair(params.N)
    eps, mu = params.epsilon_f, params.mu_f
    D = d_plus.combine((1 + mu) / 2, d_minus, (1 - mu) / 2, "D")
    D0 = d_plus.combine(eps / 2, d_minus, eps / 2, "D0")
    Dmu = d_plus.combine(eps / 2, d_minus, -eps / 2, "Dmu")
    Tmu = adH.combine(1.0, D0, 1j, "Tmu")
    full = adH.combine(-1j, D, eps, "Liouvillian")
    return GeneratorBundle(params, adH, d_plus, d_minus, D, D0, Dmu, Tmu, full)


@dataclass(frozen=True)
class NessSolution:
    rho: np.ndarray
    residual: float
    nullity: int


def _singular_values(params: SystemParams, full: np.ndarray | None = None):
    if full is None:
        full = build_dissipators(params).full.dense()
    return sla.svd(full, lapack_driver="gesdd")


def numerical_nullity(singular_values: np.ndarray, tol: float = TAU_NULL) -> int:
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0:
        return int(s.size)
    return int(np.sum(s <= tol * s[0]))


def steady_state_nullity(params: SystemParams, tol: float = TAU_NULL) -> int:
    """Numerical nullity of the full generator (1 means a unique steady state)."""
    full = build_dissipators(params).full.dense()
    s = sla.svdvals(full)
    return numerical_nullity(s, tol)


def direct_ness(params: SystemParams, tol: float = TAU_NULL) -> NessSolution:
    """Steady state from the null space of the full generator (dense SVD)."""
    if params.epsilon <= 0:
        raise ValueError("direct_ness requires epsilon > 0; the closed chain has a degenerate kernel")
    full = build_dissipators(params).full.dense()
    _, s, vh = _singular_values(params, full)
    nullity = numerical_nullity(s, tol)
    if nullity == 0:
        raise NoSteadyState(f"smallest singular value {s[-1]:.3e} above tolerance")
    if nullity > 1:
        raise NonUniqueNess(f"numerical nullity {nullity} at tolerance {tol}")
    rho = devectorize(vh[-1].conj())
    rho = rho / np.trace(rho)
    herm_err = np.abs(rho - rho.conj().T).max()
    if herm_err > 1e-10:
        raise NessError(f"null vector is not Hermitian (deviation {herm_err:.2e})")
    rho = (rho + rho.conj().T) / 2
    if np.linalg.eigvalsh(rho).min() < -PSD_TOL:
        raise NessError("steady state has negative eigenvalues")
    residual = float(np.linalg.norm(full @ vectorize(rho)))
    if residual > 1e-10 * s[0]:
        raise NessError(f"steady-state residual {residual:.2e} too large")
    return NessSolution(rho=rho, residual=residual, nullity=nullity)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the nuclear norm of a - b (also meaningful for non-Hermitian errors)."""
    return float(0.5 * np.linalg.svd(np.asarray(a) - np.asarray(b), compute_uv=False).sum())
