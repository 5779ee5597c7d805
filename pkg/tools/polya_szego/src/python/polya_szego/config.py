"""Configuration module for toolkit runs.

ToolkitConfig holds the defaults shared by every subcommand. Values come
from built-in defaults, then PSZ_* environment variables, then
command-line flags.
"""

import os
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from polya_szego.certify import DEFAULT_CELL_BUDGET
from polya_szego.quadrature import QuadratureConfig

ENV_FIELDS = {
    "PSZ_REL_TOL": "rel_tol",
    "PSZ_ABS_TOL": "abs_tol",
    "PSZ_MAX_DEPTH": "max_depth",
    "PSZ_CELL_BUDGET": "cell_budget",
    "PSZ_THREADS": "threads",
    "PSZ_SEED": "seed",
}


class ToolkitConfig(BaseModel):
    """Defaults for quadrature, certification budgets, workers and seeds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rel_tol: float = Field(default=1e-10, gt=0.0, description="Quadrature rel tol")
    abs_tol: float = Field(default=1e-12, gt=0.0, description="Quadrature abs tol")
    max_depth: int = Field(default=40, ge=1, description="Quadrature max depth")
    cell_budget: int = Field(
        default=DEFAULT_CELL_BUDGET, ge=1, description="Cell enclosures per region"
    )
    threads: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        ge=1,
        description="Worker threads",
    )
    seed: int = Field(default=0, ge=0, description="Base seed for random trials")

    @classmethod
    def from_env(cls, environ: Optional[Dict[str, str]] = None) -> "ToolkitConfig":
        """Build a config from PSZ_* variables; unset ones keep defaults.

        Raises:
            pydantic.ValidationError: If a variable does not parse or is out
                of range
        """
        environ = os.environ if environ is None else environ
        values = {
            field: environ.get(name)
            for name, field in ENV_FIELDS.items()
            if environ.get(name) not in (None, "")
        }
        return cls.model_validate(values)

    def with_overrides(self, **overrides: Any) -> "ToolkitConfig":
        """Copy with the non-None overrides applied and validated."""
        values = self.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ToolkitConfig.model_validate(values)

    @property
    def quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(
            rel_tol=self.rel_tol, abs_tol=self.abs_tol, max_depth=self.max_depth
        )
