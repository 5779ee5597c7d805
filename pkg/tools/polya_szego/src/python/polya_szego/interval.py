"""Outward-rounded interval arithmetic over numpy arrays.

An ``Interval`` holds two float64 arrays of equal shape, so one object
encloses a whole batch of cells and every operation is a handful of
vectorized numpy calls. Rounding is made outward by stepping endpoints
with ``np.nextafter`` after each operation instead of switching the FPU
rounding mode: one ulp for the correctly rounded operations (+, -, *, /,
sqrt) and ``KULPS`` ulps for library transcendentals.

The monotone special functions (``lw``, ``wl``, ``lv``, ``phi``,
``inv_lv``, ``ratio``) take exact chart coordinates and evaluate only at
the endpoints, with their removable limits at 0 and infinity built in.

``MpIntervalOps`` evaluates the same functions with mpmath's interval
context at a 64-bit mantissa for cells whose margin is at rounding scale.
"""

import threading
from typing import Any, Tuple, Union

import mpmath
import numpy as np
from mpmath.libmp import round_ceiling, round_floor, to_float
from utils.error_handling import DomainError

# Outward steps applied to endpoints of library transcendentals.
KULPS = 4
# Below this argument the closed forms lose precision in subnormals.
TINY = 1e-300
# phi(v) = v ln(1 + 1/v) is below this for every v < TINY.
PHI_TINY_BOUND = 1e-297
EXTENDED_PRECISION_BITS = 64

Scalar = Union[float, int]


class IntervalDivisionError(Exception):
    """Exception raised when dividing by an interval that contains 0."""

    pass


def _down(x: np.ndarray, steps: int = 1) -> np.ndarray:
    for _ in range(steps):
        x = np.nextafter(x, -np.inf)
    return x


def _up(x: np.ndarray, steps: int = 1) -> np.ndarray:
    for _ in range(steps):
        x = np.nextafter(x, np.inf)
    return x


def _down_inexact(x: np.ndarray, exact: np.ndarray) -> np.ndarray:
    return np.where(exact, x, _down(x))


def _up_inexact(x: np.ndarray, exact: np.ndarray) -> np.ndarray:
    return np.where(exact, x, _up(x))


def _as_array(x: Any) -> np.ndarray:
    return np.asarray(x, dtype=float)


class Interval:
    """A batch of closed intervals [lo, hi] with outward rounding."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: Any, hi: Any = None):
        self.lo = _as_array(lo)
        self.hi = self.lo if hi is None else _as_array(hi)
        if self.lo.shape != self.hi.shape:
            self.lo, self.hi = np.broadcast_arrays(self.lo, self.hi)

    @classmethod
    def point(cls, x: Any) -> "Interval":
        """Degenerate interval(s) at exactly representable values."""
        return cls(x, x)

    def __repr__(self) -> str:
        return f"Interval(lo={self.lo!r}, hi={self.hi!r})"

    def __len__(self) -> int:
        return int(self.lo.size)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.lo.shape

    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, x: Any) -> np.ndarray:
        x = _as_array(x)
        return (self.lo <= x) & (x <= self.hi)

    def contains_zero(self) -> np.ndarray:
        return (self.lo <= 0.0) & (self.hi >= 0.0)

    # Arithmetic

    @staticmethod
    def _coerce(other: Any) -> "Interval":
        if isinstance(other, Interval):
            return other
        return Interval.point(other)

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __pos__(self) -> "Interval":
        return self

    def __add__(self, other: Any) -> "Interval":
        other = self._coerce(other)
        lo = self.lo + other.lo
        hi = self.hi + other.hi
        return Interval(
            _down_inexact(lo, (self.lo == 0.0) | (other.lo == 0.0) | (lo == 0.0)),
            _up_inexact(hi, (self.hi == 0.0) | (other.hi == 0.0) | (hi == 0.0)),
        )

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Interval":
        other = self._coerce(other)
        return self + (-other)

    def __rsub__(self, other: Any) -> "Interval":
        return self._coerce(other) - self

    def __mul__(self, other: Any) -> "Interval":
        other = self._coerce(other)
        a_lo, a_hi, b_lo, b_hi = np.broadcast_arrays(
            self.lo, self.hi, other.lo, other.hi
        )
        left = np.stack([a_lo, a_lo, a_hi, a_hi])
        right = np.stack([b_lo, b_hi, b_lo, b_hi])
        with np.errstate(invalid="ignore", over="ignore"):
            products = left * right
        # 0 * inf: intervals hold reals only, so the product is 0.
        exact = (left == 0.0) | (right == 0.0)
        products = np.where(np.isnan(products), 0.0, products)
        lo = _down_inexact(products, exact).min(axis=0)
        hi = _up_inexact(products, exact).max(axis=0)
        return Interval(lo, hi)

    __rmul__ = __mul__

    def _quotient(self, other: "Interval") -> "Interval":
        a_lo, a_hi, b_lo, b_hi = np.broadcast_arrays(
            self.lo, self.hi, other.lo, other.hi
        )
        numerators = np.stack([a_lo, a_lo, a_hi, a_hi])
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            quotients = numerators / np.stack([b_lo, b_hi, b_lo, b_hi])
        exact = numerators == 0.0
        lo = _down_inexact(quotients, exact).min(axis=0)
        hi = _up_inexact(quotients, exact).max(axis=0)
        # inf / inf leaves the quotient unconstrained.
        undefined = np.isnan(quotients).any(axis=0)
        lo = np.where(undefined, -np.inf, lo)
        hi = np.where(undefined, np.inf, hi)
        return Interval(lo, hi)

    def __truediv__(self, other: Any) -> "Interval":
        other = self._coerce(other)
        if np.any(other.contains_zero()):
            raise IntervalDivisionError(
                "division by an interval containing 0 "
                f"({int(np.count_nonzero(other.contains_zero()))} element(s))"
            )
        return self._quotient(other)

    def __rtruediv__(self, other: Any) -> "Interval":
        return self._coerce(other) / self

    def divide(self, other: Any, widen: bool = False) -> "Interval":
        """Division that, with ``widen``, maps zero-containing divisors to
        the whole line instead of raising."""
        other = self._coerce(other)
        if not widen:
            return self / other
        bad = other.contains_zero()
        safe = Interval(np.where(bad, 1.0, other.lo), np.where(bad, 1.0, other.hi))
        quotient = self._quotient(safe)
        return Interval(
            np.where(bad, -np.inf, quotient.lo), np.where(bad, np.inf, quotient.hi)
        )

    def __pow__(self, exponent: Any) -> "Interval":
        if isinstance(exponent, Interval):
            return self.pow(exponent)
        if isinstance(exponent, (int, np.integer)) and exponent >= 0:
            return self._integer_power(int(exponent))
        raise TypeError(
            "interval powers take a nonnegative integer or an Interval exponent, "
            f"got {exponent!r}"
        )

    def _integer_power(self, n: int) -> "Interval":
        if n == 0:
            return Interval.point(np.ones_like(self.lo))
        if n == 1:
            return self
        if n % 2 == 0:
            magnitude_lo = np.where(
                self.contains_zero(), 0.0, np.minimum(np.abs(self.lo), np.abs(self.hi))
            )
            magnitude_hi = np.maximum(np.abs(self.lo), np.abs(self.hi))
            return Interval(_power_down(magnitude_lo, n), _power_up(magnitude_hi, n))
        lo_abs, hi_abs = np.abs(self.lo), np.abs(self.hi)
        lo = np.where(
            self.lo >= 0.0, _power_down(lo_abs, n), -_power_up(lo_abs, n)
        )
        hi = np.where(
            self.hi >= 0.0, _power_up(hi_abs, n), -_power_down(hi_abs, n)
        )
        return Interval(lo, hi)

    # Elementary functions

    def exp(self) -> "Interval":
        with np.errstate(over="ignore"):
            lo = np.where(
                self.lo == 0.0, 1.0, np.maximum(_down(np.exp(self.lo), KULPS), 0.0)
            )
            hi = np.where(self.hi == 0.0, 1.0, _up(np.exp(self.hi), KULPS))
        return Interval(lo, hi)

    def log(self) -> "Interval":
        """Natural logarithm; the part of the argument at or below 0 is
        dropped.

        Raises:
            DomainError: If some element lies entirely at or below 0
        """
        if np.any(self.hi <= 0.0):
            raise DomainError("logarithm of an interval with no positive part")
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(self.lo > 0.0, _down(np.log(self.lo), KULPS), -np.inf)
            hi = _up(np.log(self.hi), KULPS)
        lo = np.where(self.lo == 1.0, 0.0, lo)
        hi = np.where(self.hi == 1.0, 0.0, hi)
        return Interval(lo, hi)

    def log1p(self) -> "Interval":
        """ln(1 + x); arguments at or below -1 are treated like log."""
        if np.any(self.hi <= -1.0):
            raise DomainError("log1p of an interval entirely at or below -1")
        with np.errstate(divide="ignore", invalid="ignore"):
            lo = np.where(self.lo > -1.0, _down(np.log1p(self.lo), KULPS), -np.inf)
            hi = _up(np.log1p(self.hi), KULPS)
        # log1p(0) = 0 exactly.
        lo = np.where(self.lo == 0.0, 0.0, lo)
        hi = np.where(self.hi == 0.0, 0.0, hi)
        return Interval(lo, hi)

    def sqrt(self) -> "Interval":
        if np.any(self.hi < 0.0):
            raise DomainError("square root of a negative interval")
        lo = np.maximum(_down(np.sqrt(np.maximum(self.lo, 0.0))), 0.0)
        return Interval(lo, _up(np.sqrt(self.hi)))

    def pow(self, exponent: "Interval") -> "Interval":
        """self ** exponent = exp(exponent * log(self)) for self > 0."""
        return (exponent * self.log()).exp()


def _power_up(base: np.ndarray, n: int) -> np.ndarray:
    result = np.ones_like(base)
    with np.errstate(over="ignore"):
        for _ in range(n):
            result = _up(result * base)
    return result


def _power_down(base: np.ndarray, n: int) -> np.ndarray:
    result = np.ones_like(base)
    for _ in range(n):
        result = np.maximum(_down(result * base), 0.0)
    return result


# Monotone special functions of chart coordinates (arguments >= 0).


def _lw_point(w: np.ndarray, upward: bool) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.log1p(w) / w
    stepped = _up(raw, KULPS) if upward else _down(raw, KULPS)
    stepped = np.where(np.isinf(w), 0.0, stepped)
    return np.clip(stepped, 0.0, 1.0)


def lw(w: Interval) -> Interval:
    """Enclosure of ln(1 + w)/w, decreasing with value 1 at w = 0."""
    hi = np.where(w.lo < TINY, 1.0, _lw_point(np.maximum(w.lo, TINY), True))
    lo = _lw_point(np.maximum(w.hi, TINY), False)
    return Interval(lo, hi)


def _wl_point(w: np.ndarray, upward: bool) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        raw = w / np.log1p(w)
    stepped = _up(raw, KULPS) if upward else _down(raw, KULPS)
    stepped = np.where(np.isinf(w), np.inf, stepped)
    return np.maximum(stepped, 1.0)


def wl(w: Interval) -> Interval:
    """Enclosure of w/ln(1 + w), increasing with value 1 at w = 0."""
    lo = np.where(w.lo < TINY, 1.0, _wl_point(np.maximum(w.lo, TINY), False))
    hi = _wl_point(np.maximum(w.hi, TINY), True)
    return Interval(lo, hi)


def _lv_point(v: np.ndarray, upward: bool) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore"):
        reciprocal = 1.0 / v
    if upward:
        return _up(np.log1p(_up(reciprocal)), KULPS)
    return np.maximum(_down(np.log1p(_down(reciprocal)), KULPS), 0.0)


def lv(v: Interval) -> Interval:
    """Enclosure of ln(1 + 1/v), decreasing with value +inf at v = 0."""
    return Interval(_lv_point(v.hi, False), _lv_point(v.lo, True))


def inv_lv(v: Interval) -> Interval:
    """Enclosure of 1/ln(1 + 1/v), increasing with value 0 at v = 0."""
    log_part = lv(v)
    with np.errstate(divide="ignore"):
        lo = np.maximum(_down(1.0 / log_part.hi), 0.0)
        hi = _up(1.0 / log_part.lo)
    return Interval(lo, hi)


def phi(v: Interval) -> Interval:
    """Enclosure of v ln(1 + 1/v), increasing from 0 at v = 0 to 1 at
    infinity."""
    with np.errstate(invalid="ignore", over="ignore"):
        lo_raw = v.lo * _lv_point(v.lo, False)
        hi_raw = v.hi * _lv_point(v.hi, True)
    lo = np.where(
        (v.lo < TINY) | np.isnan(lo_raw), 0.0, np.maximum(_down(lo_raw), 0.0)
    )
    hi = np.where(v.hi < TINY, PHI_TINY_BOUND, _up(hi_raw))
    hi = np.where(np.isinf(v.hi) | np.isnan(hi_raw), 1.0, np.minimum(hi, 1.0))
    lo = np.where(np.isinf(v.lo), _down(np.ones_like(lo)), lo)
    return Interval(lo, hi)


def ratio(a: Interval, b: Interval) -> Interval:
    """Enclosure of a/(a + b) for a, b >= 0.

    Increasing in a and decreasing in b. At a = b = 0 the quotient has no
    limit, so such cells get the full range [0, 1].
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        lo_den = _up(a.lo + b.hi)
        lo = np.where(lo_den > 0.0, _down(a.lo / lo_den), 0.0)
        hi_den = _down(a.hi + b.lo)
        hi = np.where(hi_den > 0.0, _up(a.hi / hi_den), 1.0)
    lo = np.where(np.isnan(lo), 0.0, lo)
    hi = np.where(np.isnan(hi), 1.0, hi)
    return Interval(np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0))


def log1p(x: Interval) -> Interval:
    return x.log1p()


class NumpyIntervalOps:
    """Vectorized double-precision backend for the chart formulas."""

    name = "double"

    lw = staticmethod(lw)
    wl = staticmethod(wl)
    lv = staticmethod(lv)
    phi = staticmethod(phi)
    inv_lv = staticmethod(inv_lv)
    ratio = staticmethod(ratio)
    log1p = staticmethod(log1p)

    @staticmethod
    def box(lo: Any, hi: Any) -> Interval:
        return Interval(lo, hi)

    @staticmethod
    def bounds(value: Interval) -> Tuple[np.ndarray, np.ndarray]:
        return value.lo, value.hi


_MP_LOCK = threading.Lock()


class MpIntervalOps:
    """Scalar mpmath interval backend at an extended working precision.

    mpmath keeps the interval precision on a shared context, so every
    evaluation runs inside ``precision()`` which holds a lock and restores
    the previous setting.
    """

    name = "extended"

    def __init__(self, bits: int = EXTENDED_PRECISION_BITS):
        self.bits = bits

    def precision(self) -> "_MpPrecision":
        return _MpPrecision(self.bits)

    @staticmethod
    def box(lo: float, hi: float) -> Any:
        return mpmath.iv.mpf([lo, hi])

    @staticmethod
    def bounds(value: Any) -> Tuple[float, float]:
        lo, hi = value._mpi_
        return (
            float(np.nextafter(to_float(lo, rnd=round_floor), -np.inf)),
            float(np.nextafter(to_float(hi, rnd=round_ceiling), np.inf)),
        )

    @staticmethod
    def _endpoints(x: Any) -> Tuple[Any, Any]:
        return x.a, x.b

    @staticmethod
    def _join(low: Any, high: Any) -> Any:
        return mpmath.iv.mpf([low.a, high.b])

    def log1p(self, x: Any) -> Any:
        return mpmath.iv.log(1 + x)

    def lw(self, w: Any) -> Any:
        left, right = self._endpoints(w)
        one = mpmath.iv.mpf(1)
        upper = one if left <= 0 else mpmath.iv.log(1 + left) / left
        lower = one if right <= 0 else mpmath.iv.log(1 + right) / right
        return self._join(lower, upper)

    def wl(self, w: Any) -> Any:
        left, right = self._endpoints(w)
        one = mpmath.iv.mpf(1)
        lower = one if left <= 0 else left / mpmath.iv.log(1 + left)
        upper = one if right <= 0 else right / mpmath.iv.log(1 + right)
        return self._join(lower, upper)

    def lv(self, v: Any) -> Any:
        left, right = self._endpoints(v)
        upper = (
            mpmath.iv.mpf(mpmath.inf) if left <= 0 else mpmath.iv.log(1 + 1 / left)
        )
        return self._join(mpmath.iv.log(1 + 1 / right), upper)

    def inv_lv(self, v: Any) -> Any:
        left, right = self._endpoints(v)
        lower = mpmath.iv.mpf(0) if left <= 0 else 1 / mpmath.iv.log(1 + 1 / left)
        return self._join(lower, 1 / mpmath.iv.log(1 + 1 / right))

    def phi(self, v: Any) -> Any:
        left, right = self._endpoints(v)
        lower = mpmath.iv.mpf(0) if left <= 0 else left * mpmath.iv.log(1 + 1 / left)
        return self._join(lower, right * mpmath.iv.log(1 + 1 / right))

    def ratio(self, a: Any, b: Any) -> Any:
        a_lo, a_hi = self._endpoints(a)
        b_lo, b_hi = self._endpoints(b)
        zero, one = mpmath.iv.mpf(0), mpmath.iv.mpf(1)
        lower = zero if a_lo + b_hi <= 0 else a_lo / (a_lo + b_hi)
        upper = one if a_hi + b_lo <= 0 else a_hi / (a_hi + b_lo)
        return self._join(lower, upper)


class _MpPrecision:
    """Context manager holding mpmath's interval precision at ``bits``."""

    def __init__(self, bits: int):
        self.bits = bits
        self._saved = 0

    def __enter__(self) -> "_MpPrecision":
        _MP_LOCK.acquire()
        self._saved = mpmath.iv.prec
        mpmath.iv.prec = self.bits
        return self

    def __exit__(self, *exc_info: Any) -> None:
        mpmath.iv.prec = self._saved
        _MP_LOCK.release()
