"""
Spin-chain operator algebra.

Dense 2^N x 2^N operators are plain complex numpy arrays. Superoperators act
on column-stacked vectorizations and are stored as sparse 4^N x 4^N matrices.

Vectorization convention
------------------------
``vectorize(A)`` stacks the columns of ``A``, so that

    vec(A X) = (I kron A) vec(X)
    vec(X A) = (A^T kron I) vec(X)

and the Hilbert-Schmidt product tr(A^dag B) equals ``np.vdot(vec A, vec B)``.

Sites are indexed 0..N-1; site 0 is the leftmost tensor factor.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from functools import reduce
from typing import Union

import numpy as np
import scipy.sparse as sp

Rational = Union[Fraction, int, float, str, Decimal]

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# sigma^+ raises: |down> -> |up>, with |up> = (1, 0)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

PAULI = {"0": SIGMA_0, "x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def as_rational(value: Rational) -> Fraction:
    """Convert ``value`` to an exact Fraction.

    Strings may be ``"p/q"`` or decimals (``"0.3"`` gives 3/10). Floats go
    through their shortest repr, so ``0.1`` also becomes 1/10.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ValueError(f"non-finite parameter {value!r}")
        return Fraction(repr(value))
    if isinstance(value, Decimal):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            if "/" in text:
                num, den = text.split("/", 1)
                return Fraction(int(num), int(den))
            return Fraction(Decimal(text))
        except (ValueError, InvalidOperation, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse rational from {value!r}") from exc
    raise TypeError(f"unsupported rational type {type(value).__name__}")


@dataclass(frozen=True)
class SystemParams:
    """Chain length, anisotropy, coupling and bias, carried as exact rationals."""

    N: int
    delta: Fraction
    epsilon: Fraction = Fraction(1)
    mu: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", as_rational(self.delta))
        object.__setattr__(self, "epsilon", as_rational(self.epsilon))
        object.__setattr__(self, "mu", as_rational(self.mu))
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"chain length must be an integer >= 2, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if self.epsilon < 0:
            raise ValueError(f"coupling must be non-negative, got {self.epsilon}")
        if abs(self.mu) > 1:
            raise ValueError(f"|mu| must be <= 1, got {self.mu}")

    @property
    def dim(self) -> int:
        return 2**self.N

    @property
    def delta_f(self) -> float:
        return float(self.delta)

    @property
    def epsilon_f(self) -> float:
        return float(self.epsilon)

    @property
    def mu_f(self) -> float:
        return float(self.mu)

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "delta": str(self.delta),
            "epsilon": str(self.epsilon),
            "mu": str(self.mu),
        }


def site_operator(op: np.ndarray, site: int, N: int) -> np.ndarray:
    """Embed a single-site 2x2 operator at ``site`` of an N-site chain."""
    if not 0 <= site < N:
        raise IndexError(f"site {site} outside chain of length {N}")
    factors = [op if k == site else SIGMA_0 for k in range(N)]
    return reduce(np.kron, factors)


def pauli_string(labels: str) -> np.ndarray:
    """Tensor product of Pauli matrices, e.g. ``pauli_string("xz0")``."""
    out = reduce(np.kron, [PAULI[c] for c in labels])
    if set(labels) != {"0"}:
        assert abs(np.trace(out)) == 0, f"Pauli string {labels} is not traceless"
    return out


def _bond_string(N: int, j: int, a: str) -> str:
    return "".join(a if k in (j, j + 1) else "0" for k in range(N))


def hamiltonian_parts(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (H_xy, H_zz) with H = H_xy + Delta * H_zz; both integer-valued."""
    if N < 2:
        raise ValueError("chain length must be >= 2")
    d = 2**N
    h_xy = np.zeros((d, d), dtype=complex)
    h_zz = np.zeros((d, d), dtype=complex)
    for j in range(N - 1):
        h_xy += pauli_string(_bond_string(N, j, "x")) + pauli_string(_bond_string(N, j, "y"))
        h_zz += pauli_string(_bond_string(N, j, "z"))
    return h_xy, h_zz


def build_hamiltonian(params: SystemParams) -> np.ndarray:
    """Open XXZ chain: sum_j sx sx + sy sy + Delta sz sz over nearest neighbours."""
    h_xy, h_zz = hamiltonian_parts(params.N)
    H = h_xy + params.delta_f * h_zz
    assert np.abs(H.imag).max() == 0
    return H


def build_lindblad_operators(params: SystemParams) -> list[np.ndarray]:
    """Boundary jump operators [L1, L2, L3, L4].

    L1, L2 act on the first site with rates eps(1+mu)/2 (sigma^+) and
    eps(1-mu)/2 (sigma^-); L3, L4 act on the last site with rates
    eps(1-mu)/2 (sigma^+) and eps(1+mu)/2 (sigma^-). At mu = 1 only the
    source at the first site and the sink at the last site survive.
    """
    N, eps, mu = params.N, params.epsilon, params.mu
    if abs(mu) > 1:
        raise ValueError("|mu| > 1 gives negative rates")
    up = float(eps * (1 + mu) / 2)
    down = float(eps * (1 - mu) / 2)
    return [
        np.sqrt(up) * site_operator(SIGMA_PLUS, 0, N),
        np.sqrt(down) * site_operator(SIGMA_MINUS, 0, N),
        np.sqrt(down) * site_operator(SIGMA_PLUS, N - 1, N),
        np.sqrt(up) * site_operator(SIGMA_MINUS, N - 1, N),
    ]


def vectorize(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A.reshape(-1, order="F").copy()


def devectorize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size)))
    if v.ndim != 1 or d * d != v.size:
        raise ValueError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape((d, d), order="F").copy()


def hs_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product tr(A^dag B)."""
    return complex(np.trace(A.conj().T @ B))


def is_hermitian(A: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.abs(A - A.conj().T).max(initial=0.0) <= tol)


@dataclass(frozen=True)
class Superoperator:
    """Sparse linear map on vectorized operators, tagged with what it represents."""

    matrix: sp.csr_matrix
    label: str

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def apply(self, A: np.ndarray) -> np.ndarray:
        """Operator-level action: devectorize(S vec A)."""
        return devectorize(self.matrix @ vectorize(A))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def adjoint(self) -> "Superoperator":
        return Superoperator(self.matrix.conj().T.tocsr(), self.label + "^dag")

    def combine(self, coeff: complex, other: "Superoperator", coeff_other: complex, label: str) -> "Superoperator":
        return Superoperator((coeff * self.matrix + coeff_other * other.matrix).tocsr(), label)


def left_multiplication(A: np.ndarray) -> sp.csr_matrix:
    return sp.kron(sp.identity(A.shape[0], format="csr"), sp.csr_matrix(A), format="csr")


def right_multiplication(A: np.ndarray) -> sp.csr_matrix:
    return sp.kron(sp.csr_matrix(A.T), sp.identity(A.shape[0], format="csr"), format="csr")


def ad_superoperator(A: np.ndarray, label: str = "adH") -> Superoperator:
    """S with S vec(X) = vec(AX - XA)."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return Superoperator((left_multiplication(A) - right_multiplication(A)).tocsr(), label)


def lindblad_dissipator(L: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix of rho -> 2 L rho L^dag - {L^dag L, rho}."""
    LdL = L.conj().T @ L
    return (
        2 * left_multiplication(L) @ right_multiplication(L.conj().T)
        - left_multiplication(LdL)
        - right_multiplication(LdL)
    ).tocsr()
