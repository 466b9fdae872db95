"""Convergence radius of perturbative steady states of boundary-driven XXZ chains."""

__version__ = "0.1.0"

from .expansion import (  # noqa: E402
    Mode,
    Tolerances,
    companion_radius,
    generate_sequence,
    polynomial_numerator,
    resolvent_reconstruct,
    truncated_series,
)
from .liouvillian import build_dissipators, direct_ness, trace_distance  # noqa: E402
from .operators import SystemParams  # noqa: E402

__all__ = [
    "Mode",
    "SystemParams",
    "Tolerances",
    "build_dissipators",
    "companion_radius",
    "direct_ness",
    "generate_sequence",
    "polynomial_numerator",
    "resolvent_reconstruct",
    "trace_distance",
    "truncated_series",
]
