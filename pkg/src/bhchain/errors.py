"""Exception types raised across the package."""


class BHChainError(Exception):
    """Base class for all package errors."""


class ConfigError(BHChainError, ValueError):
    """Invalid parameters or run configuration."""


class DivergedError(BHChainError, RuntimeError):
    """Integration lost norm control or the implicit solve failed.

    ``orbit`` is set when the failure happened inside an ensemble run.
    """

    def __init__(self, message, orbit=None):
        super().__init__(message if orbit is None else f"orbit {orbit}: {message}")
        self.orbit = orbit


class WindowError(BHChainError, ValueError):
    """Fit window has too few usable points or non-positive moments."""


class ConvergenceError(BHChainError, ArithmeticError):
    """A truncated series failed its convergence test."""


class MeshError(BHChainError, ArithmeticError):
    """Quadrature refinement changed the result by more than allowed."""


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(ConfigError):
    """A parsed configuration violates one of its invariants."""
