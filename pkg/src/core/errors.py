"""Exception hierarchy shared by the core modules and mapped to CLI exit codes."""

from typing import List, Optional


class NetCournotError(Exception):
    """Base class for every error raised by the library."""


class InstanceError(NetCournotError, ValueError):
    """
    An instance document could not be parsed or failed validation.

    Args:
        message: Human readable summary
        violations: Individual validation failures, if any
        location: Line/field location of a parse failure, if known
    """

    def __init__(self, message: str, violations: Optional[List[str]] = None, location: Optional[str] = None):
        self.violations = list(violations or [])
        self.location = location
        detail = message
        if location:
            detail = f"{detail} (at {location})"
        if self.violations:
            detail = f"{detail}: " + "; ".join(self.violations)
        super().__init__(detail)


class PreconditionError(NetCournotError, ValueError):
    """An operation was called outside its documented domain."""


class ConvergenceError(NetCournotError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance (strict mode only)."""

    def __init__(self, message: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3e})")
