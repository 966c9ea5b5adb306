"""Pseudo-spectral solver and verification lab for Schrödinger map flows."""

__version__ = "0.1.0"

from .geometry import FlatTorus, Sphere, get_manifold  # noqa: E402
from .spectral import GridSpec  # noqa: E402
from .operators import OperatorContext  # noqa: E402
from .flow import FlowParams, baseline_ll_midpoint, duhamel_step, epsilon_continuation, integrate  # noqa: E402

__all__ = ["FlatTorus", "Sphere", "get_manifold", "GridSpec", "OperatorContext", "FlowParams",
           "baseline_ll_midpoint", "duhamel_step", "epsilon_continuation", "integrate"]
