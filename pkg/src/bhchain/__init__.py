"""Classical (discrete nonlinear Schroedinger) dynamics and thermodynamics of Bose-Hubbard lattices."""

from .errors import (
    BHChainError,
    ConfigError,
    ConvergenceError,
    DivergedError,
    MeshError,
    ParseError,
    ValidationError,
    WindowError,
)
from .model import FieldState, Lattice, ModelParams, build_lattice, filled_state

__version__ = "0.1.0"

__all__ = [
    "BHChainError", "ConfigError", "ConvergenceError", "DivergedError", "FieldState", "Lattice",
    "MeshError", "ModelParams", "ParseError", "ValidationError", "WindowError", "build_lattice",
    "filled_state", "__version__",
]
