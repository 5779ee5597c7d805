"""Symmetric decreasing rearrangement of piecewise-linear functions.

The rearrangement u* is built from the distribution function
mu(t) = |{x : u(x) > t}|. Between consecutive node values mu is affine, and
a plateau of u at height t shows up as a jump of mu at t. Inverting mu/2
level by level gives the right half of u*; the left half is its mirror.
"""

from typing import Sequence, Tuple

from typing_extensions import Self

import numpy as np
import polars as pl
from pydantic import BaseModel, ConfigDict, Field, model_validator
from utils.error_handling import ParameterError

from polya_szego.function_model import PiecewiseLinear, Segment

EQUALITY_TOLERANCE = 1e-12

SAMPLE_SCHEMA = pl.Schema({"x": pl.Float64, "u": pl.Float64, "u_star": pl.Float64})
LEVEL_SCHEMA = pl.Schema(
    {"level": pl.Float64, "mu_above": pl.Float64, "mu_at_least": pl.Float64}
)


class LevelProfile(BaseModel):
    """Distribution function of u sampled at its distinct node values.

    ``mu_above[i]`` is |{u > levels[i]}| and ``mu_at_least[i]`` is
    |{u >= levels[i]}|; they differ by the length of plateaus at that
    level. Inside band i (between levels i and i+1) mu is affine with slope
    ``band_slopes[i]``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    levels: Tuple[float, ...] = Field(description="Distinct node values, from 0 up")
    mu_above: Tuple[float, ...] = Field(description="Right limits of mu at levels")
    mu_at_least: Tuple[float, ...] = Field(description="Left limits of mu at levels")
    band_slopes: Tuple[float, ...] = Field(description="Slope of mu in each band")

    @model_validator(mode="after")
    def check_consistent(self) -> Self:
        m = len(self.levels)
        if not (len(self.mu_above) == len(self.mu_at_least) == m):
            raise ValueError("level arrays differ in length")
        if len(self.band_slopes) != max(m - 1, 0):
            raise ValueError("need one band slope per pair of consecutive levels")
        return self

    def measure(self, t: float) -> float:
        """mu(t) from the profile (affine interpolation inside bands)."""
        if t >= self.levels[-1]:
            return 0.0
        if t < self.levels[0]:
            return 2.0
        index = int(np.searchsorted(self.levels, t, side="right")) - 1
        if t == self.levels[index]:
            return self.mu_above[index]
        return self.mu_above[index] + self.band_slopes[index] * (
            t - self.levels[index]
        )


def _segment_measure_above(segment: Segment, t: float) -> float:
    """Length of the part of one linear piece lying strictly above t."""
    low, high = min(segment.v_lo, segment.v_hi), max(segment.v_lo, segment.v_hi)
    if low > t:
        return segment.length
    if high <= t:
        return 0.0
    return segment.length * (high - t) / (high - low)


def distribution_measure(u: PiecewiseLinear, t: float) -> float:
    """Lebesgue measure of {x in [-1, 1] : u(x) > t}, segment by segment."""
    return float(sum(_segment_measure_above(seg, t) for seg in u.segments()))


def _plateau_length(u: PiecewiseLinear, level: float) -> float:
    return float(
        sum(
            seg.length
            for seg in u.segments()
            if seg.v_lo == level and seg.v_hi == level
        )
    )


def level_profile(u: PiecewiseLinear) -> LevelProfile:
    """Build the distribution-function profile of u."""
    levels = sorted(set(u.values))
    segments = u.segments()
    mu_above = [
        float(sum(_segment_measure_above(seg, t) for seg in segments)) for t in levels
    ]
    mu_at_least = [
        above + (_plateau_length(u, t) if t > 0.0 else 0.0)
        for above, t in zip(mu_above, levels)
    ]
    band_slopes = []
    for lower, upper in zip(levels, levels[1:]):
        band_slopes.append(
            -float(
                sum(
                    1.0 / abs(seg.slope)
                    for seg in segments
                    if min(seg.v_lo, seg.v_hi) <= lower
                    and max(seg.v_lo, seg.v_hi) >= upper
                    and seg.v_lo != seg.v_hi
                )
            )
        )
    return LevelProfile(
        levels=tuple(levels),
        mu_above=tuple(mu_above),
        mu_at_least=tuple(mu_at_least),
        band_slopes=tuple(band_slopes),
    )


def symmetrize(u: PiecewiseLinear) -> PiecewiseLinear:
    """Symmetric decreasing rearrangement u* of u.

    u* is even, nonincreasing on [0, 1], equimeasurable with u and has the
    same maximum. The result is returned in canonical form.
    """
    profile = level_profile(u)
    # Right half, walking down from the maximum: at each level the flat
    # piece (plateau) spans [mu_above/2, mu_at_least/2].
    right: list[tuple[float, float]] = []
    for level, above, at_least in zip(
        reversed(profile.levels),
        reversed(profile.mu_above),
        reversed(profile.mu_at_least),
    ):
        if level == 0.0:
            right.append((min(0.5 * above, 1.0), 0.0))
            break
        right.append((min(0.5 * above, 1.0), level))
        right.append((min(0.5 * at_least, 1.0), level))
    right.append((1.0, 0.0))

    nodes: list[tuple[float, float]] = []
    for x, v in right:
        if nodes and x <= nodes[-1][0]:
            # Coincident abscissae only occur for equal values (empty plateau).
            continue
        nodes.append((x, v))

    # nodes[0] sits at x = 0 since nothing exceeds the maximum.
    mirrored = [(-x, v) for x, v in reversed(nodes) if x > 0.0]
    full = [*mirrored, *nodes]
    result = PiecewiseLinear(
        breakpoints=tuple(x for x, _ in full), values=tuple(v for _, v in full)
    )
    return result.canonical()


def same_function(
    u: PiecewiseLinear, v: PiecewiseLinear, tolerance: float = EQUALITY_TOLERANCE
) -> bool:
    """Breakpoint-for-breakpoint comparison after canonicalization."""
    cu, cv = u.canonical(), v.canonical()
    if len(cu.breakpoints) != len(cv.breakpoints):
        return False
    return bool(
        np.max(np.abs(np.subtract(cu.breakpoints, cv.breakpoints))) <= tolerance
        and np.max(np.abs(np.subtract(cu.values, cv.values))) <= tolerance
    )


def symmetrize_grid(samples: Sequence[float], cell_width: float) -> list[float]:
    """Symmetric decreasing arrangement of cell values.

    The largest value goes to the middle cell; of two cells equidistant from
    the middle, the right one is filled first (so with an even count the
    largest value sits in the right-middle cell). The multiset of values is
    preserved.

    Raises:
        ParameterError: If samples is empty or cell_width is not positive
    """
    m = len(samples)
    if m == 0:
        raise ParameterError("symmetrize_grid needs at least one sample")
    if cell_width <= 0.0:
        raise ParameterError(f"cell_width must be positive, got {cell_width}")
    # Stable sort keeps equal values in their original left-to-right order.
    ordered = sorted(samples, key=lambda value: -value)
    positions = sorted(range(m), key=lambda i: (abs(2 * i - (m - 1)), -i))
    arranged = [0.0] * m
    for position, value in zip(positions, ordered):
        arranged[position] = float(value)
    return arranged


def sample_profile(u: PiecewiseLinear, samples: int) -> pl.DataFrame:
    """u and u* on samples equally spaced points of [-1, 1].

    Raises:
        ParameterError: If samples < 2
    """
    if samples < 2:
        raise ParameterError(f"need at least 2 samples, got {samples}")
    xs = np.linspace(-1.0, 1.0, samples)
    return pl.DataFrame(
        {"x": xs, "u": u.sample(xs), "u_star": symmetrize(u).sample(xs)},
        schema=SAMPLE_SCHEMA,
    )


def level_frame(profile: LevelProfile) -> pl.DataFrame:
    """Distribution function at each node level."""
    return pl.DataFrame(
        {
            "level": profile.levels,
            "mu_above": profile.mu_above,
            "mu_at_least": profile.mu_at_least,
        },
        schema=LEVEL_SCHEMA,
    )
