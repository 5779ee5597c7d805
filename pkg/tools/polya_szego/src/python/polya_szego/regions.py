"""Regions of the A-bound certificates.

The quadrant w > 0, q >= 0 is covered by compact rectangles in one of four
charts; unbounded directions use r = 1/q or v = 1/w. Initial mesh steps
and thresholds are the tabulated ones; refinement starts from them.
"""

import math
from typing import Any, Dict, Tuple

from typing_extensions import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from polya_szego.enclosures import FORMULAS, ChartName, Quantity

# w >= 6 is v <= 1/6; rounding 1/6 up keeps the seam with R1 covered.
ONE_SIXTH_UP = float(np.nextafter(1.0 / 6.0, 1.0))


class RegionSpec(BaseModel):
    """A compact rectangle in chart coordinates with its certificate target.

    The quantity (A, d/dr A or the second derivative of A(w, inf)) must
    stay at or below ``threshold`` everywhere on the rectangle.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(description="Region label, e.g. R1")
    chart: ChartName = Field(description="Chart coordinates (x, y)")
    quantity: Quantity = Field(default="A", description="Bounded quantity")
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    step1: float = Field(gt=0.0, description="Initial mesh step in x")
    step2: float = Field(gt=0.0, description="Initial mesh step in y")
    threshold: float = Field(description="Certified upper bound target")
    monotone_factors: bool = Field(
        default=False, description="Tighten with the (w, q) factor bound"
    )
    extended_precision: bool = Field(
        default=False, description="Re-evaluate near-threshold cells in mpmath"
    )

    @model_validator(mode="after")
    def check_region(self) -> Self:
        bounds = (self.x_lo, self.x_hi, self.y_lo, self.y_hi)
        if not all(math.isfinite(b) for b in bounds):
            raise ValueError(f"region {self.name} must have finite chart bounds")
        if self.x_lo > self.x_hi or self.y_lo > self.y_hi:
            raise ValueError(f"region {self.name} has inverted bounds {bounds}")
        if self.x_lo < 0.0 or self.y_lo < 0.0:
            raise ValueError(f"region {self.name} leaves the positive quadrant")
        if (self.chart, self.quantity) not in FORMULAS:
            raise ValueError(f"{self.quantity} is not available in chart {self.chart}")
        if self.monotone_factors and (self.chart, self.quantity) != ("w,q", "A"):
            raise ValueError("monotone factors apply only to A in the w,q chart")
        if self.quantity in ("dr_A", "Ainf_dd") and self.x_lo <= 0.0:
            raise ValueError(f"{self.quantity} needs w bounded away from 0")
        return self

    def bounds(self) -> Tuple[float, float, float, float]:
        return self.x_lo, self.x_hi, self.y_lo, self.y_hi

    def with_overrides(self, **updates: Any) -> "RegionSpec":
        """Copy with some fields replaced, validated again."""
        values = self.model_dump()
        values.update({k: v for k, v in updates.items() if v is not None})
        return RegionSpec.model_validate(values)

    def scaled(self, threshold_scale: float = 1.0, step_scale: float = 1.0) -> Self:
        """Scale the mesh steps, and the threshold when the quantity is A."""
        threshold = self.threshold
        if self.quantity == "A":
            threshold *= threshold_scale
        return self.with_overrides(
            threshold=threshold,
            step1=self.step1 * step_scale,
            step2=self.step2 * step_scale,
        )


def region_catalog() -> Dict[str, RegionSpec]:
    """All certificate regions by name."""
    specs = [
        RegionSpec(
            name="R1", chart="w,q", x_lo=0.0, x_hi=6.0, y_lo=0.0, y_hi=1.0,
            step1=6e-2, step2=1e-1, threshold=0.51, monotone_factors=True,
        ),
        RegionSpec(
            name="R2", chart="w,r", x_lo=0.0, x_hi=1.0, y_lo=0.0, y_hi=1.0,
            step1=1e-2, step2=1e-2, threshold=0.617,
        ),
        RegionSpec(
            name="R3", chart="w,r", x_lo=1.0, x_hi=4.0, y_lo=0.0, y_hi=1.0,
            step1=5e-3, step2=1e-3, threshold=0.6272,
        ),
        RegionSpec(
            name="R4", chart="v,q", x_lo=0.0, x_hi=ONE_SIXTH_UP, y_lo=0.0, y_hi=1.0,
            step1=2e-2, step2=1e-1, threshold=0.50,
        ),
        RegionSpec(
            name="R5", chart="v,r", x_lo=0.0, x_hi=0.25, y_lo=0.0, y_hi=1.0,
            step1=2e-3, step2=1e-2, threshold=0.605,
        ),
        RegionSpec(
            name="R6", chart="w,q", x_lo=0.0, x_hi=3.0, y_lo=0.0, y_hi=1.36,
            step1=3e-3, step2=1.36e-3, threshold=0.498, monotone_factors=True,
        ),
        RegionSpec(
            name="R7", chart="w,q", x_lo=3.0, x_hi=5.0, y_lo=0.0, y_hi=1.3,
            step1=2e-3, step2=1.3e-3, threshold=0.498, monotone_factors=True,
        ),
        RegionSpec(
            name="R8", chart="w,q", x_lo=3.0, x_hi=5.0, y_lo=1.3, y_hi=1.36,
            step1=2e-4, step2=6e-6, threshold=0.49996, monotone_factors=True,
            extended_precision=True,
        ),
        RegionSpec(
            name="R9", chart="v,q", x_lo=0.0, x_hi=0.2, y_lo=0.0, y_hi=1.36,
            step1=2e-3, step2=1.36e-2, threshold=0.4992,
        ),
        RegionSpec(
            name="R3-dr", chart="w,r", quantity="dr_A", x_lo=1.0, x_hi=4.0,
            y_lo=0.0, y_hi=1.0, step1=5e-3, step2=1e-3, threshold=-0.08,
        ),
        RegionSpec(
            name="Ainf-dd", chart="w,r", quantity="Ainf_dd", x_lo=1.0, x_hi=4.0,
            y_lo=0.0, y_hi=0.0, step1=3e-3, step2=1.0, threshold=0.0,
        ),
        RegionSpec(
            name="R3-max", chart="w,r", x_lo=1.0, x_hi=4.0, y_lo=0.0, y_hi=0.0,
            step1=3e-3, step2=1.0, threshold=0.6272,
        ),
    ]  # fmt: skip
    return {spec.name: spec for spec in specs}


def get_region(name: str) -> RegionSpec:
    """Look up a catalog region.

    Raises:
        KeyError: If the name is not in the catalog
    """
    catalog = region_catalog()
    if name not in catalog:
        raise KeyError(f"unknown region {name!r}; known: {', '.join(catalog)}")
    return catalog[name]
