"""Common Pydantic models for the toolkit."""

from .run_metrics import RunMetrics

__all__ = ["RunMetrics"]
