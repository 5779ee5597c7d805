"""Error handling utilities for the symmetrization toolkit.

Defines the exception hierarchy shared by every module, the JSON error
response emitted by command-line entry points, and a collector used by
batch experiments to accumulate per-item failures without aborting the
batch.
"""

import logging
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CERTIFIED = 2


class ToolkitError(Exception):
    """Base class for errors raised by the toolkit."""

    pass


class DomainError(ToolkitError, ValueError):
    """Raised when an argument lies outside the mathematical domain of an
    operation (for example x outside [-1, 1] or s <= 0)."""

    pass


class ParameterError(ToolkitError, ValueError):
    """Raised when construction parameters are invalid."""

    pass


class NumericError(ToolkitError, ArithmeticError):
    """Raised when a numeric procedure fails to converge.

    Carries the value accumulated so far and its error estimate so that
    callers can report a partial result.
    """

    def __init__(
        self, message: str, partial_value: float = float("nan"), est_error: float = 0.0
    ):
        super().__init__(message)
        self.partial_value = partial_value
        self.est_error = est_error


class ErrorResponse(BaseModel):
    """Standardized error response format."""

    error: str
    error_code: str
    exit_code: int
    timestamp: datetime
    details: Optional[Dict[str, Any]] = None


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


def handle_validation_error(error: ValidationError, source: str) -> ErrorResponse:
    """Handle Pydantic validation errors on input documents.

    Args:
        error: Pydantic ValidationError
        source: Name of the input that failed (file path or flag)

    Returns:
        Error response carrying the location of every failing field
    """
    logger.warning(f"Validation error in {source}: {error!s}")

    return ErrorResponse(
        error=f"Invalid input: {source}",
        error_code="VALIDATION_ERROR",
        exit_code=EXIT_ERROR,
        timestamp=_utc_now(),
        details={
            "validation_errors": [
                {"loc": list(item["loc"]), "msg": item["msg"]}
                for item in error.errors()
            ]
        },
    )


def handle_input_error(error: Exception, source: str) -> ErrorResponse:
    """Handle input documents that cannot be read or are not JSON.

    Args:
        error: The OSError or JSON decoding error
        source: Name of the input that failed (file path or flag)

    Returns:
        Error response naming the input
    """
    logger.warning(f"Cannot read input {source}: {error!s}")

    return ErrorResponse(
        error=f"Cannot read input: {source}",
        error_code="INPUT_ERROR",
        exit_code=EXIT_ERROR,
        timestamp=_utc_now(),
        details={"reason": str(error), "error_type": type(error).__name__},
    )


def handle_domain_error(error: ToolkitError, operation: str) -> ErrorResponse:
    """Handle domain and parameter errors.

    Args:
        error: The raised domain or parameter error
        operation: Name of the operation that rejected its arguments

    Returns:
        Error response for the command-line caller
    """
    logger.warning(f"{operation} rejected its arguments: {error!s}")

    return ErrorResponse(
        error=str(error),
        error_code=(
            "PARAMETER_ERROR" if isinstance(error, ParameterError) else "DOMAIN_ERROR"
        ),
        exit_code=EXIT_ERROR,
        timestamp=_utc_now(),
        details={"operation": operation},
    )


def handle_numeric_error(error: NumericError, operation: str) -> ErrorResponse:
    """Handle numeric non-convergence.

    Args:
        error: NumericError with the partial value
        operation: Name of the operation that failed

    Returns:
        Error response including the partial value and its error estimate
    """
    logger.error(
        f"Numeric error in {operation}: {error!s}",
        extra={
            "operation": operation,
            "partial_value": error.partial_value,
            "est_error": error.est_error,
        },
    )

    return ErrorResponse(
        error=str(error),
        error_code="NUMERIC_ERROR",
        exit_code=EXIT_ERROR,
        timestamp=_utc_now(),
        details={
            "operation": operation,
            "partial_value": error.partial_value,
            "est_error": error.est_error,
        },
    )


def handle_processing_error(error: Exception, operation: str) -> ErrorResponse:
    """Handle unexpected errors.

    Args:
        error: Exception that occurred
        operation: Name of the operation that failed

    Returns:
        Error response without internal details
    """
    logger.error(
        f"Processing error in {operation}: {error!s}",
        extra={
            "error": str(error),
            "operation": operation,
            "error_type": type(error).__name__,
        },
    )

    return ErrorResponse(
        error="Internal processing error",
        error_code="PROCESSING_ERROR",
        exit_code=EXIT_ERROR,
        timestamp=_utc_now(),
        details={"error_type": type(error).__name__},
    )


class ErrorCollector:
    """Utility class for collecting errors and warnings during batch
    experiments."""

    def __init__(self):
        self.errors: List[Dict[str, Any]] = []
        self.warnings: List[Dict[str, Any]] = []

    def add_error(self, message: str, context: Optional[Dict[str, Any]] = None) -> None:
        """Add an error message with optional context."""
        self.errors.append({"message": message, "context": context or {}})
        logger.error(message, extra=context or {})

    def add_warning(
        self, message: str, context: Optional[Dict[str, Any]] = None
    ) -> None:
        """Add a warning message with optional context."""
        self.warnings.append({"message": message, "context": context or {}})
        logger.warning(message, extra=context or {})

    def has_errors(self) -> bool:
        """Check if any errors have been collected."""
        return len(self.errors) > 0

    def has_warnings(self) -> bool:
        """Check if any warnings have been collected."""
        return len(self.warnings) > 0

    def get_error_summary(self) -> Dict[str, Any]:
        """Get a summary of collected errors and warnings."""
        return {
            "error_count": len(self.errors),
            "warning_count": len(self.warnings),
            "errors": self.errors,
            "warnings": self.warnings,
        }
