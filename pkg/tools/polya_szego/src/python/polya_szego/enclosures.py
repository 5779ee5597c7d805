"""Interval enclosures of A(w, q) and its two auxiliary quantities.

A is written once per chart against a small backend protocol (interval
boxes, arithmetic operators and the monotone special functions of
``polya_szego.interval``), so the same formula runs vectorized in double
precision and, for single cells, in mpmath's extended interval context.

Charts (unbounded directions are always compactified):

* ``w,q``: A = (q w n1 + B) q / (2 (q w + 1)(q + 1))
* ``w,r``: r = 1/q, A = [n1 + theta (B - n1)] / (2 (1 + r)), theta = r/(w + r)
* ``v,q``: v = 1/w, A = rho (q n1 + v B) / (2 (q + 1)), rho = q/(q + v)
* ``v,r``: A = (n1 + r v B) / (2 (1 + r v)(1 + r))

with n1 = 4 - L - 3 L/w and B = L/w - L + 4 w/L - 4, L = ln(1 + w).
"""

import logging
from typing import Any, Callable, Dict, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from polya_szego.interval import Interval, MpIntervalOps, NumpyIntervalOps

logger = logging.getLogger(__name__)

ChartName = Literal["w,q", "w,r", "v,q", "v,r"]
Quantity = Literal["A", "dr_A", "Ainf_dd"]
Trend = Literal["increasing", "decreasing", "constant", "undetermined"]

NUMPY_OPS = NumpyIntervalOps()

# Claims are checked on a CLAIM_TILES x CLAIM_TILES tiling, refined where
# the derivative enclosure straddles 0.
CLAIM_TILES = 32
CLAIM_MAX_DEPTH = 8
# Below this w the derivative bounds come from alternating series.
SERIES_DERIVATIVE_LIMIT = 0.5


def _w_parts(w: Any, ops: Any) -> Tuple[Any, Any, Any]:
    log_w = ops.log1p(w)
    lw = ops.lw(w)
    n1 = 4 - log_w - 3 * lw
    b = lw - log_w + 4 * ops.wl(w) - 4
    return log_w, n1, b


def _v_parts(v: Any, ops: Any) -> Tuple[Any, Any]:
    """n1 and v B in terms of v = 1/w."""
    phi = ops.phi(v)
    n1 = 4 - ops.lv(v) - 3 * phi
    vb = 4 * ops.inv_lv(v) - (1 - v) * phi - 4 * v
    return n1, vb


def a_wq(w: Any, q: Any, ops: Any) -> Any:
    _, n1, b = _w_parts(w, ops)
    qw = q * w
    return (qw * n1 + b) / (2 * (qw + 1)) * ops.ratio(q, ops.box(1.0, 1.0))


def a_wr(w: Any, r: Any, ops: Any) -> Any:
    _, n1, b = _w_parts(w, ops)
    theta = ops.ratio(r, w)
    return (n1 + theta * (b - n1)) / (2 * (1 + r))


def a_vq(v: Any, q: Any, ops: Any) -> Any:
    n1, vb = _v_parts(v, ops)
    return ops.ratio(q, v) * (q * n1 + vb) / (2 * (q + 1))


def a_vr(v: Any, r: Any, ops: Any) -> Any:
    n1, vb = _v_parts(v, ops)
    return (n1 + r * vb) / (2 * (1 + r * v) * (1 + r))


def dr_a_wr(w: Any, r: Any, ops: Any) -> Any:
    """d/dr of the r-form: [B (w - r^2) - N1 (1 + w + 2r)] / (2 (w+r)^2 (1+r)^2)
    with N1 = 4w - (w + 3) L. Needs w > 0."""
    log_w, _, b = _w_parts(w, ops)
    big_n1 = 4 * w - (w + 3) * log_w
    numerator = b * (w - r**2) - big_n1 * (1 + w + 2 * r)
    return numerator / (2 * (w + r) ** 2 * (1 + r) ** 2)


def ainf_dd(w: Any, _unused: Any, ops: Any) -> Any:
    """Second derivative of A(w, inf); needs w > 0."""
    log_w = ops.log1p(w)
    one_w = 1 + w
    return 0.5 * (
        1 / one_w**2
        + 3 / (w * one_w**2)
        + 6 / (w**2 * one_w)
        - 6 * log_w / w**3
    )


Formula = Callable[[Any, Any, Any], Any]

FORMULAS: Dict[Tuple[str, str], Formula] = {
    ("w,q", "A"): a_wq,
    ("w,r", "A"): a_wr,
    ("v,q", "A"): a_vq,
    ("v,r", "A"): a_vr,
    ("w,r", "dr_A"): dr_a_wr,
    ("w,r", "Ainf_dd"): ainf_dd,
}


def formula_for(chart: str, quantity: str) -> Formula:
    try:
        return FORMULAS[(chart, quantity)]
    except KeyError as e:
        raise ValueError(f"no formula for {quantity} in chart {chart}") from e


# Monotone factors of the (w, q) decomposition.


def _lw_derivative(w: Interval) -> Interval:
    """Enclosure of d/dw [L/w]; for w <= 1/2 from the alternating series
    -1/2 + 2w/3 - 3w^2/4 + ..."""
    closed = (w / (1 + w) - w.log1p()).divide(w**2, widen=True)
    series_hi = -0.5 + Interval.point(2.0 * w.hi) / 3
    use_series = w.hi <= SERIES_DERIVATIVE_LIMIT
    return Interval(
        np.where(use_series, -0.5, closed.lo),
        np.where(use_series, series_hi.hi, closed.hi),
    )


def _wl_derivative(w: Interval) -> Interval:
    """Enclosure of d/dw [w/L]; for w <= 1/2 from 1/2 - w/6 + w^2/8 - ..."""
    log_w = w.log1p()
    closed = (log_w - w / (1 + w)).divide(log_w**2, widen=True)
    series_lo = 0.5 - Interval.point(w.hi) / 6
    use_series = w.hi <= SERIES_DERIVATIVE_LIMIT
    return Interval(
        np.where(use_series, series_lo.lo, closed.lo),
        np.where(use_series, 0.5, closed.hi),
    )


Derivative = Optional[Callable[[Interval, Interval], Interval]]


class MonotoneFactor(NamedTuple):
    """One bracketed factor of A in the (w, q) chart.

    ``role`` says how the factor enters: added to or subtracted from the
    numerator, or as the denominator or the q/(q+1) scale.
    """

    name: str
    role: Literal["plus", "minus", "denominator", "scale"]
    value: Callable[[Any, Any, Any], Any]
    d_w: Derivative
    d_q: Derivative


FACTORS: Tuple[MonotoneFactor, ...] = (
    MonotoneFactor(
        "4qw",
        "plus",
        lambda w, q, ops: 4 * q * w,
        lambda w, q: 4 * q,
        lambda w, q: 4 * w,
    ),
    MonotoneFactor(
        "q(w+3)L",
        "minus",
        lambda w, q, ops: q * (w + 3) * ops.log1p(w),
        lambda w, q: q * (w.log1p() + (w + 3) / (1 + w)),
        lambda w, q: (w + 3) * w.log1p(),
    ),
    MonotoneFactor(
        "L/w",
        "plus",
        lambda w, q, ops: ops.lw(w),
        lambda w, q: _lw_derivative(w),
        None,
    ),
    MonotoneFactor(
        "L", "minus", lambda w, q, ops: ops.log1p(w), lambda w, q: 1 / (1 + w), None
    ),
    MonotoneFactor(
        "4w/L",
        "plus",
        lambda w, q, ops: 4 * ops.wl(w),
        lambda w, q: 4 * _wl_derivative(w),
        None,
    ),
    MonotoneFactor(
        "2(qw+1)",
        "denominator",
        lambda w, q, ops: 2 * (q * w + 1),
        lambda w, q: 2 * q,
        lambda w, q: 2 * w,
    ),
    MonotoneFactor(
        "q/(q+1)",
        "scale",
        lambda w, q, ops: ops.ratio(q, ops.box(1.0, 1.0)),
        None,
        lambda w, q: 1 / (q + 1) ** 2,
    ),
)


class FactorClaim(BaseModel):
    """Certified monotonicity of one factor in each variable."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    factor: str
    w: Trend
    q: Trend


class MonotoneReport(BaseModel):
    """Per-factor monotonicity over one rectangle of the (w, q) chart."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    region: str
    claims: Tuple[FactorClaim, ...]
    tiles_evaluated: int = Field(ge=0)

    def by_name(self) -> Dict[str, FactorClaim]:
        return {claim.factor: claim for claim in self.claims}

    @property
    def all_certified(self) -> bool:
        return all(
            claim.w != "undetermined" and claim.q != "undetermined"
            for claim in self.claims
        )


def _tile(lo: float, hi: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    if hi == lo:
        return np.array([lo]), np.array([hi])
    edges = np.linspace(lo, hi, n + 1)
    edges[-1] = hi
    return edges[:-1], edges[1:]


def _derivative_trend(
    derivative: Derivative,
    bounds: Tuple[float, float, float, float],
    tiles: int,
    max_depth: int,
) -> Tuple[Trend, int]:
    """Sign of a derivative enclosure over a rectangle, with adaptive
    splitting of straddling tiles."""
    if derivative is None:
        return "constant", 0
    w_lo, w_hi = _tile(bounds[0], bounds[1], tiles)
    q_lo, q_hi = _tile(bounds[2], bounds[3], tiles)
    a_lo = np.repeat(w_lo, len(q_lo))
    a_hi = np.repeat(w_hi, len(q_hi))
    b_lo = np.tile(q_lo, len(w_lo))
    b_hi = np.tile(q_hi, len(w_hi))
    all_nonnegative = all_nonpositive = True
    evaluated = 0
    for depth in range(max_depth + 1):
        enclosure = derivative(Interval(a_lo, a_hi), Interval(b_lo, b_hi))
        evaluated += len(a_lo)
        lo = np.where(np.isnan(enclosure.lo), -np.inf, enclosure.lo)
        hi = np.where(np.isnan(enclosure.hi), np.inf, enclosure.hi)
        straddle = (lo < 0.0) & (hi > 0.0)
        all_nonnegative &= bool(np.all(lo[~straddle] >= 0.0))
        all_nonpositive &= bool(np.all(hi[~straddle] <= 0.0))
        if not np.any(straddle) or depth == max_depth:
            break
        a_lo, a_hi = a_lo[straddle], a_hi[straddle]
        b_lo, b_hi = b_lo[straddle], b_hi[straddle]
        a_mid = 0.5 * (a_lo + a_hi)
        b_mid = 0.5 * (b_lo + b_hi)
        a_lo = np.concatenate([a_lo, a_mid, a_lo, a_mid])
        a_hi = np.concatenate([a_mid, a_hi, a_mid, a_hi])
        b_lo = np.concatenate([b_lo, b_lo, b_mid, b_mid])
        b_hi = np.concatenate([b_mid, b_mid, b_hi, b_hi])
    if np.any(straddle):
        return "undetermined", evaluated
    if all_nonnegative and all_nonpositive:
        return "constant", evaluated
    if all_nonnegative:
        return "increasing", evaluated
    if all_nonpositive:
        return "decreasing", evaluated
    return "undetermined", evaluated


def verify_monotone_claims(
    region: str,
    bounds: Tuple[float, float, float, float],
    tiles: int = CLAIM_TILES,
    max_depth: int = CLAIM_MAX_DEPTH,
) -> MonotoneReport:
    """Certify the monotonicity of every factor over a (w, q) rectangle.

    A derivative's interval enclosure is evaluated on a tiling; tiles where
    it straddles 0 are split up to max_depth times. An undetermined trend
    only disables corner evaluation for that variable.
    """
    claims = []
    evaluated = 0
    for factor in FACTORS:
        w_trend, w_tiles = _derivative_trend(factor.d_w, bounds, tiles, max_depth)
        q_trend, q_tiles = _derivative_trend(factor.d_q, bounds, tiles, max_depth)
        evaluated += w_tiles + q_tiles
        claims.append(FactorClaim(factor=factor.name, w=w_trend, q=q_trend))
    report = MonotoneReport(
        region=region, claims=tuple(claims), tiles_evaluated=evaluated
    )
    if not report.all_certified:
        logger.warning(
            "Monotonicity undetermined for some factors",
            extra={
                "region": region,
                "undetermined": [
                    c.factor for c in claims if "undetermined" in (c.w, c.q)
                ],
            },
        )
    return report


def _corner(lo: Any, hi: Any, trend: Trend, want_high: bool, ops: Any) -> Any:
    if trend == "increasing":
        value = hi if want_high else lo
    elif trend == "decreasing":
        value = lo if want_high else hi
    elif trend == "constant":
        value = lo
    else:
        return ops.box(lo, hi)
    return ops.box(value, value)


def factor_upper_bound(
    cell: Sequence[Any], claims: MonotoneReport, ops: Any = NUMPY_OPS
) -> np.ndarray:
    """Upper bound of A over (w, q) cells from the factor decomposition.

    Each factor is evaluated at the corner where it is extremal in the
    needed direction (or on the whole cell for undetermined variables):
    numerator N = [4qw] - [q(w+3)L] + [L/w] - [L] + [4w/L] - 4, and
    A <= N_hi / den_lo * scale_hi when N_hi >= 0, else N_hi / den_hi *
    scale_lo.
    """
    w_lo, w_hi, q_lo, q_hi = cell
    by_name = claims.by_name()

    def extreme(factor: MonotoneFactor, want_high: bool) -> Any:
        claim = by_name[factor.name]
        w = _corner(w_lo, w_hi, claim.w, want_high, ops)
        q = _corner(q_lo, q_hi, claim.q, want_high, ops)
        lo, hi = ops.bounds(factor.value(w, q, ops))
        return hi if want_high else lo

    def point(x: Any) -> Any:
        return ops.box(x, x)

    numerator = point(-4.0)
    for factor in FACTORS:
        if factor.role == "plus":
            numerator = numerator + point(extreme(factor, True))
        elif factor.role == "minus":
            numerator = numerator - point(extreme(factor, False))
    n_hi = ops.bounds(numerator)[1]
    denominator, scale = FACTORS[5], FACTORS[6]
    over_low = point(n_hi) / point(extreme(denominator, False))
    over_high = point(n_hi) / point(extreme(denominator, True))
    positive = ops.bounds(over_low * point(extreme(scale, True)))[1]
    negative = ops.bounds(over_high * point(extreme(scale, False)))[1]
    return np.where(np.asarray(n_hi) >= 0.0, positive, negative)


def enclose(
    chart: str,
    quantity: str,
    cell: Sequence[Any],
    claims: Optional[MonotoneReport] = None,
    ops: Any = NUMPY_OPS,
) -> Tuple[np.ndarray, np.ndarray]:
    """Lower and upper bounds of a quantity over cells.

    ``cell`` is (x_lo, x_hi, y_lo, y_hi) in chart coordinates. With claims
    (``w,q`` chart, quantity A) the direct interval extension is
    intersected with the monotone-factor upper bound. Division by an
    interval containing 0 widens that cell to the whole line.
    """
    x_lo, x_hi, y_lo, y_hi = cell
    formula = formula_for(chart, quantity)
    direct = formula(ops.box(x_lo, x_hi), ops.box(y_lo, y_hi), ops)
    lo, hi = ops.bounds(direct)
    lo = np.where(np.isnan(lo), -np.inf, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    if claims is not None and chart == "w,q" and quantity == "A":
        hi = np.minimum(hi, factor_upper_bound(cell, claims, ops))
    return lo, hi


def enclose_extended(
    chart: str,
    quantity: str,
    cell: Sequence[float],
    claims: Optional[MonotoneReport] = None,
) -> Tuple[float, float]:
    """Single-cell enclosure in mpmath interval arithmetic."""
    ops = MpIntervalOps()
    with ops.precision():
        lo, hi = enclose(chart, quantity, [float(c) for c in cell], claims, ops)
    return float(lo), float(hi)


def interval_A(
    cell: Sequence[Any], chart: ChartName, claims: Optional[MonotoneReport] = None
) -> Interval:
    """Interval containing A over each cell of a chart.

    Raises:
        IntervalDivisionError: Never for A; the chart formulas only divide
            by quantities bounded away from 0
    """
    lo, hi = enclose(chart, "A", [np.asarray(c, dtype=float) for c in cell], claims)
    return Interval(lo, hi)


def bound_dr_A(cell: Sequence[Any]) -> Interval:
    """Interval containing d/dr A(w, 1/r) over (w, r) cells with w > 0."""
    lo, hi = enclose("w,r", "dr_A", [np.asarray(c, dtype=float) for c in cell])
    return Interval(lo, hi)


def bound_Ainf_dd(w_lo: Any, w_hi: Any) -> Interval:
    """Interval containing the second derivative of A(w, inf) over [w_lo, w_hi]."""
    w_lo = np.asarray(w_lo, dtype=float)
    zeros = np.zeros_like(w_lo)
    lo, hi = enclose(
        "w,r", "Ainf_dd", [w_lo, np.asarray(w_hi, dtype=float), zeros, zeros]
    )
    return Interval(lo, hi)
