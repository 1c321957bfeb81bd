"""Custom exceptions for the Macbeath DAG library."""

from typing import Any, Optional


class MacbeathError(Exception):
    """Base exception for all library errors."""

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class InputError(MacbeathError):
    """Raised when user-supplied geometry or files are malformed."""


class DegenerateInputError(InputError):
    """Raised when input is well-formed but geometrically degenerate."""


class PreconditionError(MacbeathError):
    """Raised when an operation is called outside its precondition."""


class UnboundedError(MacbeathError):
    """Raised when an LP or a ray is unbounded."""


class InfeasibleError(MacbeathError):
    """Raised when an LP has no feasible point."""


class ErosionTooLargeError(MacbeathError):
    """Raised when eroding a polytope leaves nothing behind."""

    def __init__(self, message: str, delta: Optional[float] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.delta = delta


class NumericError(MacbeathError):
    """Raised when an iterative method fails to converge."""


class OutOfRegimeError(MacbeathError):
    """Raised when a point is too deep for the minimal-cap guarantees."""


class ProjectiveDegenerateError(MacbeathError):
    """Raised when a projective map hits a vanishing denominator."""


class ConstructionError(MacbeathError):
    """Raised when DAG construction cannot certify coverage."""

    def __init__(self, message: str, uncovered_direction: Optional[list[float]] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.uncovered_direction = uncovered_direction


class InvariantViolation(MacbeathError):
    """Raised when a query detects a broken structural invariant."""


class VerificationError(MacbeathError):
    """Raised when answers checked against an exact oracle break their contract."""
