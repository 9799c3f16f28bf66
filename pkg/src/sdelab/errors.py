"""Exception types shared across the package."""


class SdeLabError(Exception):
    """Base class for all package errors."""


class InputError(SdeLabError, ValueError):
    """Malformed or inconsistent caller input (empty grids, bad intervals, ...)."""


class ConfigError(SdeLabError, ValueError):
    """Invalid configuration value (quadrature order, run config, ...)."""


class MeasureError(SdeLabError, ValueError):
    """Jump intensity measure unusable (infinite truncated mass, bad support)."""


class ParameterError(SdeLabError, ValueError):
    """Model parameters violate their declared constraints."""


class EvaluationError(SdeLabError, RuntimeError):
    """A coefficient returned a non-finite value; carries the offending point."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class DivergedError(SdeLabError, RuntimeError):
    """Numerical blow-up of a solution path; carries the first bad time."""

    def __init__(self, message: str, time=None):
        super().__init__(message)
        self.time = time


class DegenerateDiffusionError(SdeLabError, RuntimeError):
    """sigma vanished along a path where a positive lower bound is required."""


class PreconditionError(SdeLabError, RuntimeError):
    """An experiment's certified-condition prerequisite failed."""


class UnderpoweredError(SdeLabError, ValueError):
    """Sample size too small for the requested statistical verdict."""
