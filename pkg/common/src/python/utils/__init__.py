"""General utilities shared by the toolkit."""

from .error_handling import (
    EXIT_ERROR,
    EXIT_NOT_CERTIFIED,
    EXIT_OK,
    DomainError,
    ErrorCollector,
    ErrorResponse,
    NumericError,
    ParameterError,
    ToolkitError,
    handle_domain_error,
    handle_input_error,
    handle_numeric_error,
    handle_processing_error,
    handle_validation_error,
)

__all__ = [
    "EXIT_ERROR",
    "EXIT_NOT_CERTIFIED",
    "EXIT_OK",
    "DomainError",
    "ErrorCollector",
    "ErrorResponse",
    "NumericError",
    "ParameterError",
    "ToolkitError",
    "handle_domain_error",
    "handle_input_error",
    "handle_numeric_error",
    "handle_processing_error",
    "handle_validation_error",
]
