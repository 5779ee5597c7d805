"""RunMetrics model for certification runs and experiment suites."""

from datetime import datetime
from typing import List, Optional

from typing_extensions import Self

from pydantic import BaseModel, Field, model_validator


class RunMetrics(BaseModel):
    """Metrics for a certification run or experiment batch, used for
    logging."""

    start_time: datetime = Field(description="Run start time")
    end_time: Optional[datetime] = Field(default=None, description="Run end time")
    cells_evaluated: int = Field(
        default=0, description="Number of cell enclosures computed", ge=0
    )
    cells_refined: int = Field(
        default=0, description="Number of cells produced by bisection", ge=0
    )
    trials_passed: int = Field(default=0, description="Trials that passed", ge=0)
    trials_failed: int = Field(default=0, description="Trials that failed", ge=0)
    errors: List[str] = Field(
        default_factory=list, description="List of error messages"
    )

    @model_validator(mode="after")
    def end_time_after_start_time(self) -> Self:
        """Validate that end_time is not before start_time."""
        if self.end_time is not None and self.end_time < self.start_time:
            raise ValueError("end_time must be after start_time")
        return self

    @property
    def duration_seconds(self) -> float:
        """Run duration in seconds (0 while the run is open)."""
        if self.end_time is None:
            return 0.0
        return (self.end_time - self.start_time).total_seconds()

    @property
    def total_trials(self) -> int:
        return self.trials_passed + self.trials_failed

    @property
    def throughput_cells_per_second(self) -> float:
        """Cell enclosures per second."""
        duration = self.duration_seconds
        return self.cells_evaluated / duration if duration > 0 else 0.0

    def add_error(self, error_message: str) -> None:
        """Add an error message to the metrics."""
        self.errors.append(error_message)

    def add_cells(self, evaluated: int, refined: int = 0) -> None:
        """Account for a batch of evaluated (and possibly refined) cells."""
        self.cells_evaluated += evaluated
        self.cells_refined += refined

    def record_trial(self, passed: bool) -> None:
        if passed:
            self.trials_passed += 1
        else:
            self.trials_failed += 1

    def finish(self, end_time: datetime) -> None:
        """Close the run."""
        self.end_time = end_time

    def to_summary_dict(self) -> dict:
        """Convert to a summary dictionary for logging."""
        return {
            "duration_seconds": round(self.duration_seconds, 3),
            "cells_evaluated": self.cells_evaluated,
            "cells_refined": self.cells_refined,
            "throughput_cells_per_second": round(self.throughput_cells_per_second, 1),
            "trials_passed": self.trials_passed,
            "trials_failed": self.trials_failed,
            "error_count": len(self.errors),
        }
