"""Driven double-well tunneling of a spin-orbit-coupled atom.

Continuous spinor Schroedinger / Gross-Pitaevskii propagation and a reduced
four-mode Floquet model, with frequency-scan tooling on top of both.
"""

from .errors import (
    ConfigError,
    InsufficientBoundStates,
    NoFeatureError,
    PropagationError,
    StepSizeError,
    SymmetryError,
)
from .grid import GridSpec, TrapParams, build_grid, double_well
from .stationary import FourModeCoefficients, four_mode_coefficients, solve_stationary

__all__ = [
    "ConfigError",
    "FourModeCoefficients",
    "GridSpec",
    "InsufficientBoundStates",
    "NoFeatureError",
    "PropagationError",
    "StepSizeError",
    "SymmetryError",
    "TrapParams",
    "build_grid",
    "double_well",
    "four_mode_coefficients",
    "solve_stationary",
]

__version__ = "0.1.0"
