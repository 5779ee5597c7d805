"""Differential conditions on the exponent.

Joint convexity of K(s, x) = s (1 + s^-2)^(p(x)/2) in (s, x) reduces to
det(K'') >= 0, and that in turn to q q'' >= q'^2 A(w, q) for all w > 0,
with q = p - 1 and w = s^-2. This module evaluates det(K''), A, its
supremum over w and the convexity checks derived from them, plus the
determinant of the cylinder kernel Kcal used to show that no such
condition survives when p depends on a transversal coordinate.

All convexity checks are mesh scans with a stated tolerance; the
rigorous bounds on A live in ``polya_szego.certify``.
"""

import functools
import logging
import math
from typing import Optional, Tuple

from typing_extensions import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from utils.error_handling import DomainError, ParameterError

from polya_szego.function_model import ExponentSpec, exponent_eval
from polya_szego.functionals import kernel_partials
from polya_szego.search import golden_section_max

logger = logging.getLogger(__name__)

# Below this w the closed forms of A lose digits; a series is used.
SERIES_THRESHOLD = 1e-4
SCAN_POINTS = 400
SCAN_W_MIN = 1e-4
SCAN_W_MAX = 1e4
GOLDEN_TOLERANCE = 1e-10
EVEN_GRID_STEP = 1e-3
DEFAULT_TOLERANCE = 1e-9
# Exponents of the two sufficient conditions and the cap of the second.
PART1_EXPONENT = 0.63
PART2_EXPONENT = 0.5
PART2_CAP = 2.36
KCAL_PROBE_LIMIT = 1e6
Q_NEGATIVE_TOLERANCE = 1e-12


class ConditionVerdict(BaseModel):
    """Outcome of a mesh check.

    ``margin`` is the signed slack at the worst mesh point; the check
    passes exactly when the margin is at least ``-tolerance``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    check: str = Field(description="Name of the check")
    passed: bool
    witness: Optional[Tuple[float, ...]] = Field(
        default=None, description="Coordinates of the worst point"
    )
    margin: float = Field(description="Signed slack at the worst point")
    tolerance: float = Field(ge=0.0, default=DEFAULT_TOLERANCE)

    @model_validator(mode="after")
    def check_coherent(self) -> Self:
        if self.passed != (self.margin >= -self.tolerance):
            raise ValueError(
                f"passed={self.passed} disagrees with margin={self.margin} "
                f"at tolerance {self.tolerance}"
            )
        return self

    @classmethod
    def from_margin(
        cls,
        check: str,
        margin: float,
        witness: Optional[Tuple[float, ...]],
        tolerance: float = DEFAULT_TOLERANCE,
    ) -> "ConditionVerdict":
        return cls(
            check=check,
            passed=margin >= -tolerance,
            witness=witness,
            margin=margin,
            tolerance=tolerance,
        )


class SufficientConditionVerdict(BaseModel):
    """The two sufficient conditions for convexity of K."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    part1: ConditionVerdict = Field(description="p even and q^0.37 convex")
    part2: ConditionVerdict = Field(
        description="p even, p <= 2.36 and sqrt(q) convex"
    )


def _combine(check: str, verdicts: list[ConditionVerdict]) -> ConditionVerdict:
    """Conjunction of verdicts sharing one tolerance; reports the worst."""
    worst = min(verdicts, key=lambda verdict: verdict.margin)
    return ConditionVerdict.from_margin(
        check, worst.margin, worst.witness, worst.tolerance
    )


def det_K_hessian(w: float, q: float, q1: float, q2: float) -> float:
    """Determinant of the (s, x) Hessian of K at w = s^-2.

    ((1+w)^(q-1)/4) (w (wq+1)(q+1) L (q1^2 L + 2 q2)
    - q1^2 ((1 - qw) L - 2w)^2) with L = ln(1 + w).

    Raises:
        DomainError: If w <= 0
    """
    if not w > 0.0:
        raise DomainError(f"w must be positive, got {w}")
    prefactor, first, second = _det_terms(
        np.asarray(w, dtype=float), q, np.asarray(q1), np.asarray(q2)
    )
    return float(prefactor * (first - second))


def _det_terms(w: np.ndarray, q, q1, q2):
    log_w = np.log1p(w)
    prefactor = np.exp((q - 1.0) * log_w) / 4.0
    first = w * (w * q + 1.0) * (q + 1.0) * log_w * (q1 * q1 * log_w + 2.0 * q2)
    second = q1 * q1 * ((1.0 - q * w) * log_w - 2.0 * w) ** 2
    return prefactor, first, second


def _series_parts(w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(n1, B) from their expansions at w = 0."""
    n1 = 1.0 + w * (0.5 + w * (-0.5 + w * (5.0 / 12.0)))
    b = 1.0 + w * (0.5 + w * (0.5 - w * (5.0 / 12.0)))
    return n1, b


def a_parts(w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """The two w-only building blocks of A.

    n1 = 4 - L - 3 L/w and B = L/w - L + 4 w/L - 4 with L = ln(1 + w), so
    that A(w, q) = (q w n1 + B) q / (2 (q w + 1)(q + 1)). Both equal 1 at
    w = 0.
    """
    w = np.asarray(w, dtype=float)
    safe = np.where(w < SERIES_THRESHOLD, 1.0, w)
    log_w = np.log1p(safe)
    direct_n1 = 4.0 - log_w - 3.0 * log_w / safe
    direct_b = log_w / safe - log_w + 4.0 * safe / log_w - 4.0
    series_n1, series_b = _series_parts(w)
    small = w < SERIES_THRESHOLD
    return np.where(small, series_n1, direct_n1), np.where(small, series_b, direct_b)


def a_values(w: np.ndarray, q: float) -> np.ndarray:
    """Vectorized A(w, q) for fixed q (q may be +inf)."""
    n1, b = a_parts(w)
    if math.isinf(q):
        return 0.5 * n1
    w = np.asarray(w, dtype=float)
    qw = q * w
    return (qw * n1 + b) / (2.0 * (qw + 1.0)) * (q / (q + 1.0))


def _check_a_arguments(w: float, q: float) -> None:
    if math.isnan(w) or math.isnan(q) or w < 0.0 or q < 0.0:
        raise DomainError(f"A needs w >= 0 and q >= 0, got w={w}, q={q}")


def A_value(w: float, q: float) -> float:
    """A(w, q); q = +inf gives the limit 2 - (ln(w+1) + 3 ln(w+1)/w)/2.

    Raises:
        DomainError: If w or q is negative
    """
    _check_a_arguments(w, q)
    return float(a_values(np.asarray([w]), q)[0])


def A_r_form(w: float, r: float) -> float:
    """A(w, 1/r) through its rational form in r = 1/q.

    [w n1 + r B] / (2 (w + r)(1 + r)), continuous at r = 0 where it
    equals A(w, inf). At w = 0 the limit along w -> 0 is used.

    Raises:
        DomainError: If w or r is negative
    """
    _check_a_arguments(w, r)
    n1, b = a_parts(np.asarray([w]))
    theta = 1.0 if w == 0.0 else r / (w + r)
    return float((n1[0] + theta * (b[0] - n1[0])) / (2.0 * (1.0 + r)))


@functools.lru_cache(maxsize=4096)
def script_A_argmax(q: float) -> Tuple[float, float]:
    """Maximizer and maximum of A(., q) over w > 0.

    A log-spaced scan of [1e-4, 1e4] locates the peak, golden-section
    search refines it to a w-tolerance of 1e-10, and the boundary value
    at w = 0+ is kept when it is larger.

    Raises:
        DomainError: If q is negative
    """
    _check_a_arguments(0.0, q)
    grid = np.logspace(math.log10(SCAN_W_MIN), math.log10(SCAN_W_MAX), SCAN_POINTS)
    values = a_values(grid, q)
    best = int(np.argmax(values))
    left = 0.0 if best == 0 else float(grid[best - 1])
    right = float(grid[min(best + 1, SCAN_POINTS - 1)])
    w_star, value = golden_section_max(
        lambda w: A_value(w, q), left, right, GOLDEN_TOLERANCE
    )
    edge = A_value(0.0, q)
    if edge > value:
        return 0.0, edge
    return w_star, value


def script_A(q: float) -> float:
    """sup over w > 0 of A(w, q), the sharp coefficient in
    q q'' >= q'^2 script_A(q)."""
    return script_A_argmax(float(q))[1]


def check_even(p: ExponentSpec, tol: float = DEFAULT_TOLERANCE) -> ConditionVerdict:
    """Largest |p(x) - p(-x)| on a 1e-3 grid over [0, 1]."""
    xs = np.linspace(0.0, 1.0, int(round(1.0 / EVEN_GRID_STEP)) + 1)
    deviation = np.abs(p.p_values(xs) - p.p_values(-xs))
    worst = int(np.argmax(deviation))
    return ConditionVerdict.from_margin(
        "even", -float(deviation[worst]), (float(xs[worst]),), tol
    )


def _mesh(step: float) -> np.ndarray:
    if not 0.0 < step <= 1.0:
        raise ParameterError(f"mesh step must be in (0, 1], got {step}")
    return np.linspace(-1.0, 1.0, int(round(2.0 / step)) + 1)


def check_power_convex(
    p: ExponentSpec,
    M: float,
    mesh_step: float = 1e-2,
    tol: float = DEFAULT_TOLERANCE,
) -> ConditionVerdict:
    """Midpoint convexity of g = q^(1-M) over all mesh pairs whose midpoint
    is a mesh node.

    Raises:
        ParameterError: If M is not in (0, 1)
        DomainError: If q < 0 somewhere on the mesh
    """
    if not 0.0 < M < 1.0:
        raise ParameterError(f"M must be in (0, 1), got {M}")
    xs = _mesh(mesh_step)
    q = p.p_values(xs) - 1.0
    if np.any(q < -Q_NEGATIVE_TOLERANCE):
        worst = int(np.argmin(q))
        raise DomainError(f"q = p - 1 is negative at x={xs[worst]:.6g}")
    g = np.maximum(q, 0.0) ** (1.0 - M)
    left, right = np.triu_indices(len(xs), 1)
    on_mesh = (left + right) % 2 == 0
    left, right = left[on_mesh], right[on_mesh]
    slack = 0.5 * (g[left] + g[right]) - g[(left + right) // 2]
    worst = int(np.argmin(slack))
    return ConditionVerdict.from_margin(
        f"power_convex(1-{M:g})",
        float(slack[worst]),
        (float(xs[left[worst]]), float(xs[right[worst]])),
        tol,
    )


def _cap_verdict(p: ExponentSpec, cap: float, tol: float) -> ConditionVerdict:
    xs = np.linspace(-1.0, 1.0, int(round(2.0 / EVEN_GRID_STEP)) + 1)
    values = p.p_values(xs)
    worst = int(np.argmax(values))
    return ConditionVerdict.from_margin(
        f"p<={cap:g}", cap - float(values[worst]), (float(xs[worst]),), tol
    )


def check_sufficient_thm4(
    p: ExponentSpec, mesh_step: float = 1e-2, tol: float = DEFAULT_TOLERANCE
) -> SufficientConditionVerdict:
    """Both sufficient conditions for joint convexity of K.

    part1: p even and q^0.37 convex. part2: p even, p <= 2.36 and sqrt(q)
    convex.
    """
    even = check_even(p, tol)
    part1 = _combine(
        "sufficient_part1",
        [even, check_power_convex(p, PART1_EXPONENT, mesh_step, tol)],
    )
    part2 = _combine(
        "sufficient_part2",
        [
            even,
            _cap_verdict(p, PART2_CAP, tol),
            check_power_convex(p, PART2_EXPONENT, mesh_step, tol),
        ],
    )
    return SufficientConditionVerdict(part1=part1, part2=part2)


def check_joint_convexity_K(
    p: ExponentSpec,
    mesh_w: int = 64,
    mesh_x: int = 65,
    tol: float = DEFAULT_TOLERANCE,
) -> ConditionVerdict:
    """Scan det(K'') over log-spaced w in [1e-3, 1e3] and uniform x.

    The margin is the smallest determinant on the mesh. The witness is
    (w, x, relative) at that point, where relative divides the determinant's
    bracket by the size of its two competing terms and so lies in [-1, 1]
    whatever the scale of K. The check also requires d^2K/ds^2 > 0 on the
    mesh.

    Raises:
        ParameterError: If a mesh has fewer than two points
    """
    if mesh_w < 2 or mesh_x < 2:
        raise ParameterError("joint convexity mesh needs at least 2x2 points")
    ws = np.logspace(-3.0, 3.0, mesh_w)
    xs = np.linspace(-1.0, 1.0, mesh_x)
    _, q, q1, q2 = p.derivatives(xs)
    W = ws[:, None]
    prefactor, first, second = _det_terms(W, q[None, :], q1[None, :], q2[None, :])
    det = prefactor * (first - second)
    scale = np.abs(first) + np.abs(second)
    with np.errstate(invalid="ignore", divide="ignore"):
        relative = np.where(scale > 0.0, (first - second) / scale, 0.0)
    k_ss = (
        (q[None, :] + 1.0)
        * W**1.5
        * np.exp(0.5 * (q[None, :] - 3.0) * np.log1p(W))
        * (1.0 + q[None, :] * W)
    )
    # A point with K_ss <= 0 fails whatever its determinant.
    det = np.where(k_ss > 0.0, det, -np.abs(det) - 1.0)
    relative = np.where(k_ss > 0.0, relative, -1.0)
    i, j = np.unravel_index(int(np.argmin(det)), det.shape)
    verdict = ConditionVerdict.from_margin(
        "joint_convexity_K",
        float(det[i, j]),
        (float(ws[i]), float(xs[j]), float(relative[i, j])),
        tol,
    )
    logger.debug(
        "Joint convexity scan complete",
        extra={"margin": verdict.margin, "points": int(relative.size)},
    )
    return verdict


def det_Kcal_hessian(c: float, d: float, y: float, p: ExponentSpec) -> float:
    """Determinant of the (c, d, y) Hessian of the cylinder kernel.

    With s = c / sqrt(1 + d^2) and K's partials taken at (s, y):
    [det(K'') (K - s K_s) - K_ss K_y^2 d^2] / (1 + d^2)^(3/2).

    Raises:
        DomainError: If c <= 0 or y is outside [-1, 1]
    """
    if not c > 0.0:
        raise DomainError(f"c must be positive, got {c}")
    stretch = math.hypot(1.0, d)
    s = c / stretch
    partials = kernel_partials(s, y, p)
    _, q, q1, q2 = exponent_eval(p, y)
    w = 1.0 / (s * s)
    # K - s K_s = s w (q + 1) (1 + w)^((q - 1)/2), free of cancellation.
    k_minus = s * w * (q + 1.0) * math.exp(0.5 * (q - 1.0) * math.log1p(w))
    bracket = (
        det_K_hessian(w, q, q1, q2) * k_minus
        - partials.K_ss * partials.K_x**2 * d * d
    )
    return bracket / stretch**3


def kcal_negativity_probe(p: ExponentSpec, y: float, c: float) -> Optional[float]:
    """Smallest d in 1, 2, 4, ..., 1e6 with det(Kcal'') < 0, or None.

    Raises:
        DomainError: If c <= 0
    """
    if not c > 0.0:
        raise DomainError(f"c must be positive, got {c}")
    d = 1.0
    while d <= KCAL_PROBE_LIMIT:
        if det_Kcal_hessian(c, d, y, p) < 0.0:
            return d
        d *= 2.0
    return None


def check_qq_condition(
    p: ExponentSpec, mesh_x: int = 201, tol: float = DEFAULT_TOLERANCE
) -> ConditionVerdict:
    """The sharp condition q q'' - q'^2 script_A(q) >= 0 on a uniform mesh."""
    if mesh_x < 2:
        raise ParameterError("qq condition mesh needs at least 2 points")
    xs = np.linspace(-1.0, 1.0, mesh_x)
    _, q, q1, q2 = p.derivatives(xs)
    q = np.maximum(q, 0.0)
    coefficient = np.array([script_A(float(value)) for value in q])
    slack = q * q2 - q1 * q1 * coefficient
    worst = int(np.argmin(slack))
    return ConditionVerdict.from_margin(
        "qq_condition", float(slack[worst]), (float(xs[worst]),), tol
    )


def sharp_power_exponent(q_max: float, points: int = 201) -> float:
    """1 - sup over 0 <= q <= q_max of script_A(q), on a grid.

    Convexity of q^gamma with gamma at most this value implies the sharp
    condition for exponents with p - 1 <= q_max. For q_max = inf the grid
    covers [0, 1] in q and [0, 1] in r = 1/q, including the limit q = inf.

    Raises:
        ParameterError: If q_max is negative or points < 2
    """
    if not q_max >= 0.0 or points < 2:
        raise ParameterError(
            f"need q_max >= 0 and at least 2 points, got {q_max}, {points}"
        )
    if math.isinf(q_max):
        reciprocal = np.linspace(0.0, 1.0, points)
        with np.errstate(divide="ignore"):
            tail = 1.0 / reciprocal
        grid = np.concatenate([np.linspace(0.0, 1.0, points), tail])
    else:
        grid = np.linspace(0.0, q_max, points)
    sup = max(script_A(float(q)) for q in grid)
    return 1.0 - sup
