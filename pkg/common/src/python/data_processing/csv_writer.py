"""CSV file writing utilities with schema validation.

Bulk outputs (per-cell certificate dumps, per-trial gaps, sampled
profiles) are handed to external plotting tools as CSV. Frames are built
with polars against an explicit schema so that column order and types are
stable across runs.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import polars as pl

logger = logging.getLogger(__name__)


class CsvWriteError(Exception):
    """Exception raised when CSV writing fails."""

    pass


class CsvWriter:
    """Standardized CSV file creation with schema validation."""

    def __init__(self, schema: Optional[pl.Schema] = None, float_precision: int = 17):
        """Initialize CsvWriter.

        Args:
            schema: Optional schema to validate against
            float_precision: Significant digits written for float columns
        """
        self.schema = schema
        self.float_precision = float_precision

    def frame_from_rows(self, rows: List[Dict[str, Any]]) -> pl.DataFrame:
        """Build a DataFrame from row dictionaries using the writer's
        schema.

        Args:
            rows: Row dictionaries keyed by column name

        Returns:
            DataFrame with the configured schema (or inferred when none)
        """
        if self.schema is None:
            return pl.DataFrame(rows)
        return pl.DataFrame(rows, schema=self.schema)

    def write_dataframe(self, df: pl.DataFrame, output_path: str) -> None:
        """Write DataFrame to a CSV file.

        Args:
            df: Polars DataFrame to write
            output_path: Path where the CSV file will be written

        Raises:
            CsvWriteError: If writing or schema validation fails
        """
        try:
            if self.schema is not None:
                self._validate_schema(df)

            output_path_obj = Path(output_path)
            output_path_obj.parent.mkdir(parents=True, exist_ok=True)

            df.write_csv(output_path, float_precision=self.float_precision)

            logger.info(f"Successfully wrote {len(df)} rows to {output_path}")

        except Exception as e:
            error_msg = f"Failed to write CSV file to {output_path}: {e!s}"
            logger.error(error_msg)
            raise CsvWriteError(error_msg) from e

    def write_rows(self, rows: List[Dict[str, Any]], output_path: str) -> None:
        """Convenience wrapper: build a frame from rows and write it."""
        self.write_dataframe(self.frame_from_rows(rows), output_path)

    def _validate_schema(self, df: pl.DataFrame) -> None:
        """Validate DataFrame against expected schema.

        Raises:
            ValueError: If column names or types differ from the schema
        """
        if self.schema is None:
            return

        expected_columns = list(self.schema.names())
        if expected_columns != df.columns:
            raise ValueError(
                f"Schema validation failed. Expected columns {expected_columns}, "
                f"got {df.columns}"
            )

        for name, expected_dtype in self.schema.items():
            actual_dtype = df[name].dtype
            if actual_dtype != expected_dtype:
                raise ValueError(
                    f"Column '{name}' has incorrect type. "
                    f"Expected: {expected_dtype}, Actual: {actual_dtype}"
                )
