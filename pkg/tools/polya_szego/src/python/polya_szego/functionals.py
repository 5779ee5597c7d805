"""Variable-exponent functionals and their kernels.

J(u) = int |u'|^p(x) dx and I(u) = int (1 + u'^2)^(p(x)/2) dx are summed
segment by segment with adaptive Simpson quadrature; constant exponents
short-circuit to closed forms. The kernels K(s, x) = s (1 + s^-2)^(p(x)/2),
M = K - s and the cylinder kernel Kcal(c, d, y) are evaluated through
exp/log1p forms that stay finite for large slopes and small s.
"""

import logging
import math
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from utils.error_handling import DomainError, NumericError

from polya_szego.function_model import (
    ConstantExponent,
    ExponentSpec,
    PiecewiseLinear,
    exponent_eval,
)
from polya_szego.quadrature import QuadratureConfig, integrate_adaptive_simpson
from polya_szego.rearrange import symmetrize

logger = logging.getLogger(__name__)

# Smallest s accepted by the kernels; K(s, .) overflows below this.
MIN_KERNEL_ARGUMENT = 1e-300

Which = Literal["I", "J"]


class FunctionalValue(BaseModel):
    """Value of J or I with its quadrature error estimate."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    which: Which
    value: float = Field(description="Functional value")
    est_error: float = Field(ge=0.0, description="Summed quadrature error estimate")
    zero_slope_measure: float = Field(
        ge=0.0, description="Measure of the set where u' = 0"
    )


class KernelPartials(BaseModel):
    """K and its first and second partial derivatives in (s, x)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    K: float
    K_s: float
    K_x: float
    K_ss: float
    K_sx: float
    K_xx: float


def _segment_integrand(slope: float, p: ExponentSpec, which: Which):
    """Integrand of one linear piece as a vectorized function of x."""
    if which == "J":
        log_base = math.log(abs(slope))
    else:
        log_base = 0.5 * math.log1p(slope * slope)

    def integrand(x: np.ndarray) -> np.ndarray:
        return np.exp(p.p_values(x) * log_base)

    return integrand


def integrate_functional(
    u: PiecewiseLinear,
    p: ExponentSpec,
    which: Which,
    cfg: QuadratureConfig | None = None,
) -> FunctionalValue:
    """Evaluate J or I of u, segment by segment, in left-to-right order.

    Raises:
        NumericError: If quadrature does not converge on some segment;
            the partial value includes all segments completed so far
    """
    cfg = cfg or QuadratureConfig()
    pieces: list[float] = []
    errors: list[float] = []
    zero_slope = 0.0
    for segment in u.segments():
        slope = segment.slope
        if slope == 0.0:
            zero_slope += segment.length
            pieces.append(0.0 if which == "J" else segment.length)
            continue
        if isinstance(p, ConstantExponent):
            if which == "J":
                density = abs(slope) ** p.p0
            else:
                density = math.exp(0.5 * p.p0 * math.log1p(slope * slope))
            pieces.append(density * segment.length)
            continue
        try:
            value, error = integrate_adaptive_simpson(
                _segment_integrand(slope, p, which), segment.x_lo, segment.x_hi, cfg
            )
        except NumericError as e:
            partial = math.fsum(pieces) + e.partial_value
            raise NumericError(
                f"{which} quadrature failed on [{segment.x_lo}, {segment.x_hi}]: {e}",
                partial_value=partial,
                est_error=math.fsum(errors) + e.est_error,
            ) from e
        pieces.append(value)
        errors.append(error)
    return FunctionalValue(
        which=which,
        value=math.fsum(pieces),
        est_error=math.fsum(errors),
        zero_slope_measure=zero_slope,
    )


def eval_J(
    u: PiecewiseLinear, p: ExponentSpec, cfg: QuadratureConfig | None = None
) -> float:
    """J(u) = int_{-1}^{1} |u'(x)|^p(x) dx."""
    return integrate_functional(u, p, "J", cfg).value


def eval_I(
    u: PiecewiseLinear, p: ExponentSpec, cfg: QuadratureConfig | None = None
) -> float:
    """I(u) = int_{-1}^{1} (1 + u'(x)^2)^(p(x)/2) dx."""
    return integrate_functional(u, p, "I", cfg).value


def _check_kernel_argument(name: str, value: float) -> None:
    if not value > 0.0:
        raise DomainError(f"{name} must be positive, got {value}")
    if value < MIN_KERNEL_ARGUMENT:
        raise DomainError(f"{name}={value} is below {MIN_KERNEL_ARGUMENT}")


def kernel_values(s: np.ndarray, p_values: np.ndarray) -> np.ndarray:
    """Vectorized K(s, x) given the exponent values p(x)."""
    return s * np.exp(0.5 * p_values * np.log1p(1.0 / (s * s)))


def eval_K(s: float, x: float, p: ExponentSpec) -> float:
    """K(s, x) = s (1 + s^-2)^(p(x)/2).

    Raises:
        DomainError: If s <= 0 (or below 1e-300) or x is outside [-1, 1]
    """
    _check_kernel_argument("s", s)
    p_x = exponent_eval(p, x)[0]
    return s * math.exp(0.5 * p_x * math.log1p(1.0 / (s * s)))


def eval_M(s: float, x: float, p: ExponentSpec) -> float:
    """M(s, x) = K(s, x) - s, computed without cancellation."""
    _check_kernel_argument("s", s)
    p_x = exponent_eval(p, x)[0]
    return s * math.expm1(0.5 * p_x * math.log1p(1.0 / (s * s)))


def eval_M_ds(s: float, x: float, p: ExponentSpec) -> float:
    """dM/ds = (1 + w)^(p/2 - 1) (1 + w - p w) - 1 with w = 1/s^2.

    Negative for every s > 0 and tends to 0 as s grows.
    """
    _check_kernel_argument("s", s)
    p_x = exponent_eval(p, x)[0]
    w = 1.0 / (s * s)
    return math.exp((0.5 * p_x - 1.0) * math.log1p(w)) * (1.0 + w - p_x * w) - 1.0


def eval_Kcal(c: float, d: float, y: float, p: ExponentSpec) -> float:
    """Kcal(c, d, y) = c (1 + (1 + d^2)/c^2)^(p(y)/2).

    Equals sqrt(1 + d^2) K(c / sqrt(1 + d^2), y).

    Raises:
        DomainError: If c <= 0 or y is outside [-1, 1]
    """
    _check_kernel_argument("c", c)
    p_y = exponent_eval(p, y)[0]
    return c * math.exp(0.5 * p_y * math.log1p((1.0 + d * d) / (c * c)))


def kernel_partials(s: float, x: float, p: ExponentSpec) -> KernelPartials:
    """Analytic partial derivatives of K in (s, x).

    With w = 1/s^2, L = ln(1 + w) and q = p - 1:
    K_s = (1+w)^((q-1)/2) (1 - q w),
    K_ss = (q+1) w^(3/2) (1+w)^((q-3)/2) (1 + q w),
    K_x = K q' L / 2, K_xx = K L (q'^2 L + 2 q'') / 4,
    K_sx = (q'/2) (1+w)^((q-1)/2) ((1 - q w) L - 2 w).
    """
    _check_kernel_argument("s", s)
    _, q, q1, q2 = exponent_eval(p, x)
    w = 1.0 / (s * s)
    log_w = math.log1p(w)
    k = s * math.exp(0.5 * (q + 1.0) * log_w)
    base = math.exp(0.5 * (q - 1.0) * log_w)
    return KernelPartials(
        K=k,
        K_s=base * (1.0 - q * w),
        K_x=k * 0.5 * q1 * log_w,
        K_ss=(q + 1.0) * w**1.5 * math.exp(0.5 * (q - 3.0) * log_w) * (1.0 + q * w),
        K_sx=0.5 * q1 * base * ((1.0 - q * w) * log_w - 2.0 * w),
        K_xx=0.25 * k * log_w * (q1 * q1 * log_w + 2.0 * q2),
    )


class LayeredEvaluation(BaseModel):
    """I(u) - Z and I(u*) - Z computed through level bands of u."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    I_minus_Z: float = Field(description="Sum over bands of sum_k K(1/b_k, x_k(y))")
    I_star_minus_Z: float = Field(
        description="Sum over bands of 2 K(sum 1/(2 b_k), sum (-1)^k x_k(y) / 2)"
    )
    zero_slope_measure: float = Field(ge=0.0)
    bands: int = Field(ge=0, description="Number of level bands")
    min_pointwise_slack: float = Field(
        description="Smallest sampled gap between the two band integrands"
    )


def _band_integrands(crossing, p: ExponentSpec):
    """Integrands (original, symmetrized) over one level band."""
    x_start = np.array([seg.x_lo for seg in crossing])
    v_start = np.array([seg.v_lo for seg in crossing])
    run_per_rise = np.array([1.0 / seg.slope for seg in crossing])
    inv_slopes = np.abs(run_per_rise)
    log_factors = np.array(
        [0.5 * math.log1p(seg.slope * seg.slope) for seg in crossing]
    )
    signs = np.array([(-1.0) ** (k + 1) for k in range(len(crossing))])
    half_sum = 0.5 * float(np.sum(inv_slopes))

    def preimages(y: np.ndarray) -> np.ndarray:
        rise = y[None, :] - v_start[:, None]
        return x_start[:, None] + rise * run_per_rise[:, None]

    def original(y: np.ndarray) -> np.ndarray:
        xs = np.clip(preimages(y), -1.0, 1.0)
        p_values = p.p_values(xs.ravel()).reshape(xs.shape)
        return np.sum(inv_slopes[:, None] * np.exp(p_values * log_factors[:, None]), 0)

    def symmetrized(y: np.ndarray) -> np.ndarray:
        centre = np.clip(0.5 * np.sum(signs[:, None] * preimages(y), 0), -1.0, 1.0)
        return 2.0 * kernel_values(np.full_like(centre, half_sum), p.p_values(centre))

    return original, symmetrized


def layered_I(
    u: PiecewiseLinear, p: ExponentSpec, cfg: QuadratureConfig | None = None
) -> LayeredEvaluation:
    """Evaluate I(u) - Z and I(u*) - Z by integrating over levels.

    Between consecutive node values every non-flat piece of u crossing the
    band contributes K(1/b_k, x_k(y)); the rearrangement replaces them by a
    single symmetric pair, contributing 2 K(sum 1/(2 b_k), half-width(y)).
    That term is I(u*) - Z only when p is even. The pointwise difference of
    the two integrands is the slack of the quasi-convexity inequality for K.
    """
    cfg = cfg or QuadratureConfig()
    segments = u.segments()
    zero_slope = float(sum(seg.length for seg in segments if seg.slope == 0.0))
    levels = sorted(set(u.values))
    total_original: list[float] = []
    total_symmetrized: list[float] = []
    min_slack = math.inf
    for lower, upper in zip(levels, levels[1:]):
        crossing = [
            seg
            for seg in segments
            if seg.slope != 0.0
            and min(seg.v_lo, seg.v_hi) <= lower
            and max(seg.v_lo, seg.v_hi) >= upper
        ]
        original, symmetrized = _band_integrands(crossing, p)
        value_original, _ = integrate_adaptive_simpson(original, lower, upper, cfg)
        value_symmetrized, _ = integrate_adaptive_simpson(
            symmetrized, lower, upper, cfg
        )
        total_original.append(value_original)
        total_symmetrized.append(value_symmetrized)
        probes = np.linspace(lower, upper, 7)[1:-1]
        min_slack = min(
            min_slack, float(np.min(original(probes) - symmetrized(probes)))
        )
    result = LayeredEvaluation(
        I_minus_Z=math.fsum(total_original),
        I_star_minus_Z=math.fsum(total_symmetrized),
        zero_slope_measure=zero_slope,
        bands=max(len(levels) - 1, 0),
        min_pointwise_slack=min_slack if math.isfinite(min_slack) else 0.0,
    )
    logger.debug(
        "Layered evaluation complete",
        extra={
            "bands": result.bands,
            "min_pointwise_slack": result.min_pointwise_slack,
        },
    )
    return result


def functional_pair(
    u: PiecewiseLinear,
    p: ExponentSpec,
    which: Which,
    cfg: QuadratureConfig | None = None,
) -> Tuple[FunctionalValue, FunctionalValue]:
    """Functional of u and of its rearrangement."""
    return (
        integrate_functional(u, p, which, cfg),
        integrate_functional(symmetrize(u), p, which, cfg),
    )
