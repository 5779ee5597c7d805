"""Test functions u and exponent fields p.

This module defines the piecewise-linear functions the toolkit
symmetrizes and the family of variable exponents p(x) >= 1 the
functionals are built from. Both are frozen pydantic models whose JSON
form is the wire format of every command-line subcommand.
"""

import bisect
from typing import Annotated, Literal, Tuple, Union

from typing_extensions import Self

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    TypeAdapter,
    model_validator,
)
from scipy.interpolate import CubicSpline
from utils.error_handling import DomainError, ParameterError

# Dense sampling used to validate p(x) >= 1 at construction.
VALIDATION_STEP = 1e-4
# Centered finite-difference step for tabulated exponents.
TABLE_FD_STEP = 1e-5
EXPONENT_FLOOR_TOLERANCE = 1e-12


def _check_domain(x: float) -> None:
    if not -1.0 <= x <= 1.0:
        raise DomainError(f"x={x} is outside [-1, 1]")


class Segment(BaseModel):
    """One linear piece of a PiecewiseLinear function."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    x_lo: float = Field(description="Left end of the piece")
    x_hi: float = Field(description="Right end of the piece")
    v_lo: float = Field(description="Value at x_lo")
    v_hi: float = Field(description="Value at x_hi")

    @model_validator(mode="after")
    def check_ordered(self) -> Self:
        if not self.x_lo < self.x_hi:
            raise ValueError(f"Segment needs x_lo < x_hi, got {self.x_lo}, {self.x_hi}")
        return self

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def slope(self) -> float:
        return (self.v_hi - self.v_lo) / (self.x_hi - self.x_lo)

    @property
    def intercept(self) -> float:
        return self.v_lo - self.slope * self.x_lo

    def evaluate(self, x: float) -> float:
        """Linear interpolation between the endpoint values; exact at both
        ends."""
        if x == self.x_lo:
            return self.v_lo
        if x == self.x_hi:
            return self.v_hi
        return (self.v_lo * (self.x_hi - x) + self.v_hi * (x - self.x_lo)) / (
            self.x_hi - self.x_lo
        )

    def inverse(self, y: float) -> float:
        """Abscissa where the (non-flat) piece takes the value y."""
        return self.x_lo + (y - self.v_lo) * (self.x_hi - self.x_lo) / (
            self.v_hi - self.v_lo
        )


class PiecewiseLinear(BaseModel):
    """A nonnegative piecewise-linear function on [-1, 1] vanishing at
    both ends.

    Breakpoints are strictly increasing and run from -1 to 1; plateaus are
    represented by consecutive equal values.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    breakpoints: Tuple[float, ...] = Field(
        description="Strictly increasing nodes, first -1 and last 1"
    )
    values: Tuple[float, ...] = Field(description="Function values at the nodes")

    @model_validator(mode="after")
    def check_shape(self) -> Self:
        """Validate node ordering, nonnegativity and boundary values."""
        xs, vs = self.breakpoints, self.values
        if len(xs) < 2:
            raise ValueError("at least two breakpoints are required")
        if len(xs) != len(vs):
            raise ValueError(
                f"breakpoints ({len(xs)}) and values ({len(vs)}) differ in length"
            )
        if xs[0] != -1.0 or xs[-1] != 1.0:
            raise ValueError("breakpoints must start at -1 and end at 1")
        for left, right in zip(xs, xs[1:]):
            if not left < right:
                raise ValueError(f"breakpoints not strictly increasing at {right}")
        if any(not np.isfinite(v) or v < 0.0 for v in vs):
            raise ValueError("values must be finite and nonnegative")
        if vs[0] != 0.0 or vs[-1] != 0.0:
            raise ValueError("values must vanish at -1 and 1")
        return self

    @property
    def max_value(self) -> float:
        return max(self.values)

    def segments(self) -> list[Segment]:
        """Decompose into linear pieces, left to right."""
        return [
            Segment(x_lo=x0, x_hi=x1, v_lo=v0, v_hi=v1)
            for x0, x1, v0, v1 in zip(
                self.breakpoints,
                self.breakpoints[1:],
                self.values,
                self.values[1:],
            )
        ]

    def canonical(self, tolerance: float = 1e-12) -> "PiecewiseLinear":
        """Drop interior nodes where the slope does not change."""
        xs, vs = list(self.breakpoints), list(self.values)
        keep_x, keep_v = [xs[0]], [vs[0]]
        for i in range(1, len(xs) - 1):
            left = (vs[i] - keep_v[-1]) / (xs[i] - keep_x[-1])
            right = (vs[i + 1] - vs[i]) / (xs[i + 1] - xs[i])
            scale = max(1.0, abs(left), abs(right))
            if abs(left - right) > tolerance * scale:
                keep_x.append(xs[i])
                keep_v.append(vs[i])
        keep_x.append(xs[-1])
        keep_v.append(vs[-1])
        return PiecewiseLinear(breakpoints=tuple(keep_x), values=tuple(keep_v))

    def sample(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on an array of abscissae in [-1, 1]."""
        return np.interp(xs, self.breakpoints, self.values)


def eval_u(u: PiecewiseLinear, x: float) -> float:
    """Evaluate u at x by interpolation between the bracketing nodes.

    Raises:
        DomainError: If x is outside [-1, 1]
    """
    _check_domain(x)
    index = bisect.bisect_right(u.breakpoints, x) - 1
    index = min(max(index, 0), len(u.breakpoints) - 2)
    return Segment(
        x_lo=u.breakpoints[index],
        x_hi=u.breakpoints[index + 1],
        v_lo=u.values[index],
        v_hi=u.values[index + 1],
    ).evaluate(x)


def _from_nodes(nodes: list[tuple[float, float]]) -> PiecewiseLinear:
    """Build a function from (x, value) pairs, merging coincident nodes."""
    merged: list[tuple[float, float]] = []
    for x, v in nodes:
        if merged and merged[-1][0] == x:
            continue
        merged.append((x, v))
    return PiecewiseLinear(
        breakpoints=tuple(x for x, _ in merged), values=tuple(v for _, v in merged)
    )


def make_hat(x0: float, alpha: float, eps: float) -> PiecewiseLinear:
    """Tent alpha * (eps - |x - x0|)_+.

    Raises:
        ParameterError: If alpha or eps is not positive or the support
            [x0 - eps, x0 + eps] leaves [-1, 1]
    """
    if alpha <= 0.0 or eps <= 0.0:
        raise ParameterError(f"alpha and eps must be positive, got {alpha}, {eps}")
    if x0 - eps < -1.0 or x0 + eps > 1.0:
        raise ParameterError(
            f"hat support [{x0 - eps}, {x0 + eps}] is not inside [-1, 1]"
        )
    return _from_nodes(
        [
            (-1.0, 0.0),
            (x0 - eps, 0.0),
            (x0, alpha * eps),
            (x0 + eps, 0.0),
            (1.0, 0.0),
        ]
    )


def make_double_ramp(
    x1: float, x2: float, s: float, t: float, eps: float
) -> PiecewiseLinear:
    """min(2 eps, (eps + (x - x1)/s)_+, (eps + (x2 - x)/t)_+).

    The function climbs with slope 1/s across [x1 - s eps, x1 + s eps],
    stays at 2 eps and descends with slope 1/t across
    [x2 - t eps, x2 + t eps].

    Raises:
        ParameterError: If the ramps overlap or leave (-1, 1)
    """
    if s <= 0.0 or t <= 0.0 or eps <= 0.0:
        raise ParameterError(f"s, t and eps must be positive, got {s}, {t}, {eps}")
    if not -1.0 < x1 < x2 < 1.0:
        raise ParameterError(f"need -1 < x1 < x2 < 1, got {x1}, {x2}")
    nodes = [
        (-1.0, 0.0),
        (x1 - s * eps, 0.0),
        (x1 + s * eps, 2.0 * eps),
        (x2 - t * eps, 2.0 * eps),
        (x2 + t * eps, 0.0),
        (1.0, 0.0),
    ]
    node_xs = [x for x, _ in nodes]
    if not all(a < b for a, b in zip(node_xs, node_xs[1:])):
        raise ParameterError(
            f"ramp bands [{x1 - s * eps}, {x1 + s * eps}] and "
            f"[{x2 - t * eps}, {x2 + t * eps}] overlap or leave (-1, 1)"
        )
    return PiecewiseLinear(
        breakpoints=tuple(node_xs), values=tuple(v for _, v in nodes)
    )


def symmetric_double_ramp(
    x1: float, x2: float, s: float, t: float, eps: float
) -> PiecewiseLinear:
    """Closed-form rearrangement of make_double_ramp:
    min(2 eps, (eps + (x2 - x1 - 2|x|)/(s + t))_+)."""
    make_double_ramp(x1, x2, s, t, eps)
    top = 0.5 * (x2 - x1 - (s + t) * eps)
    foot = 0.5 * (x2 - x1 + (s + t) * eps)
    return _from_nodes(
        [
            (-1.0, 0.0),
            (-foot, 0.0),
            (-top, 2.0 * eps),
            (top, 2.0 * eps),
            (foot, 0.0),
            (1.0, 0.0),
        ]
    )


class _ExponentBase(BaseModel):
    """Shared behaviour of the exponent variants."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    def derivatives(
        self, x: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return (p, q, q', q'') evaluated on an array of abscissae."""
        raise NotImplementedError

    def p_values(self, x: np.ndarray) -> np.ndarray:
        return self.derivatives(np.asarray(x, dtype=float))[0]

    def check_floor(self) -> None:
        """Check p >= 1 on a dense grid over [-1, 1]."""
        grid = np.linspace(-1.0, 1.0, int(round(2.0 / VALIDATION_STEP)) + 1)
        p = self.p_values(grid)
        worst = int(np.argmin(p))
        if not np.all(np.isfinite(p)) or p[worst] < 1.0 - EXPONENT_FLOOR_TOLERANCE:
            raise ValueError(
                f"exponent must satisfy p(x) >= 1 on [-1, 1]; "
                f"p({grid[worst]:.6g}) = {p[worst]:.6g}"
            )


class ConstantExponent(_ExponentBase):
    """p(x) = p0."""

    kind: Literal["constant"] = "constant"
    p0: float = Field(ge=1.0, description="Constant exponent")

    def derivatives(self, x):
        zero = np.zeros_like(x, dtype=float)
        return zero + self.p0, zero + (self.p0 - 1.0), zero, zero.copy()


class QuadraticExponent(_ExponentBase):
    """p(x) = a + b x^2."""

    kind: Literal["quadratic"] = "quadratic"
    a: float
    b: float

    @model_validator(mode="after")
    def validate_floor(self) -> Self:
        self.check_floor()
        return self

    def derivatives(self, x):
        p = self.a + self.b * x * x
        return p, p - 1.0, 2.0 * self.b * x, np.full_like(x, 2.0 * self.b, dtype=float)


class PowerWellExponent(_ExponentBase):
    """p(x) = 1 + (a + b x^2)^gamma."""

    kind: Literal["powerwell"] = "powerwell"
    a: float = Field(ge=0.0)
    b: float = Field(ge=0.0)
    gamma: float = Field(gt=0.0)

    def derivatives(self, x):
        g = self.a + self.b * x * x
        with np.errstate(divide="ignore", invalid="ignore"):
            q = g**self.gamma
            g_pow = g ** (self.gamma - 1.0)
            # b x^2 / g, bounded by 1; its limit at g = 0 (a = 0, x = 0) is 1.
            ratio = np.where(g > 0.0, self.b * x * x / np.where(g > 0, g, 1.0), 1.0)
            q1 = np.where(g > 0.0, self.gamma * g_pow * 2.0 * self.b * x, 0.0)
            q2 = self.gamma * g_pow * (
                4.0 * self.b * (self.gamma - 1.0) * ratio + 2.0 * self.b
            )
            q2 = np.where((g == 0.0) & (self.gamma > 1.0), 0.0, q2)
        return 1.0 + q, q, q1, q2


class AffineExponent(_ExponentBase):
    """p(x) = a + b x; not even unless b = 0."""

    kind: Literal["affine"] = "affine"
    a: float
    b: float

    @model_validator(mode="after")
    def validate_floor(self) -> Self:
        self.check_floor()
        return self

    def derivatives(self, x):
        p = self.a + self.b * x
        zero = np.zeros_like(x, dtype=float)
        return p, p - 1.0, zero + self.b, zero


class TableExponent(_ExponentBase):
    """Tabulated p with cubic-spline interpolation.

    q' and q'' come from centered finite differences of the spline with
    step 1e-5, so they are accurate to roughly 1e-6 (q') and 1e-3 (q'')
    relative to the spline's own smoothness.
    """

    kind: Literal["table"] = "table"
    breakpoints: Tuple[float, ...] = Field(min_length=2)
    samples: Tuple[float, ...] = Field(min_length=2)

    _spline: CubicSpline = PrivateAttr()

    @model_validator(mode="after")
    def validate_table(self) -> Self:
        if len(self.breakpoints) != len(self.samples):
            raise ValueError("breakpoints and samples differ in length")
        if self.breakpoints[0] > -1.0 or self.breakpoints[-1] < 1.0:
            raise ValueError("table must cover [-1, 1]")
        if not all(a < b for a, b in zip(self.breakpoints, self.breakpoints[1:])):
            raise ValueError("table breakpoints must be strictly increasing")
        self._spline = CubicSpline(
            np.asarray(self.breakpoints), np.asarray(self.samples)
        )
        self.check_floor()
        return self

    def derivatives(self, x):
        h = TABLE_FD_STEP
        p = self._spline(x)
        p_plus = self._spline(x + h)
        p_minus = self._spline(x - h)
        q1 = (p_plus - p_minus) / (2.0 * h)
        q2 = (p_plus - 2.0 * p + p_minus) / (h * h)
        return p, p - 1.0, q1, q2


ExponentSpec = Annotated[
    Union[
        ConstantExponent,
        QuadraticExponent,
        PowerWellExponent,
        AffineExponent,
        TableExponent,
    ],
    Field(discriminator="kind"),
]

EXPONENT_ADAPTER: TypeAdapter[ExponentSpec] = TypeAdapter(ExponentSpec)


def parse_exponent(document: dict) -> ExponentSpec:
    """Validate an exponent JSON document.

    Raises:
        pydantic.ValidationError: If the document does not describe a
            valid exponent
    """
    return EXPONENT_ADAPTER.validate_python(document)


def exponent_eval(p: ExponentSpec, x: float) -> Tuple[float, float, float, float]:
    """Return (p, q, q', q'') at x, with q = p - 1.

    Raises:
        DomainError: If x is outside [-1, 1]
    """
    _check_domain(x)
    values = p.derivatives(np.asarray([x], dtype=float))
    return tuple(float(v[0]) for v in values)  # type: ignore[return-value]


def p_at(p: ExponentSpec, x: float) -> float:
    """Exponent value at a single point."""
    return exponent_eval(p, x)[0]
