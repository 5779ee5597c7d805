"""Data output utilities for the toolkit."""

from .csv_writer import CsvWriteError, CsvWriter

__all__ = ["CsvWriteError", "CsvWriter"]
