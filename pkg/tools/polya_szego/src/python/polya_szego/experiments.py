"""Executable experiments around the rearrangement inequalities.

Counterexample searches for J, the limit probe behind the two-ramp
inequality, randomized monotonicity trials for I, the finite-sum
quasi-convexity inequality for K and a Steiner symmetrization demo on a
two-dimensional grid. Trials report a gap (original minus symmetrized);
monotonicity trials pass when the gap is not below -tolerance,
counterexample trials pass when it is.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from typing_extensions import Self

import numpy as np
import polars as pl
from models.run_metrics import RunMetrics
from pydantic import BaseModel, ConfigDict, Field, model_validator
from utils.error_handling import ErrorCollector, ParameterError, ToolkitError

from polya_szego.conditions import script_A_argmax
from polya_szego.function_model import (
    ExponentSpec,
    PiecewiseLinear,
    TableExponent,
    make_double_ramp,
    make_hat,
    symmetric_double_ramp,
)
from polya_szego.functionals import eval_K, eval_M, integrate_functional
from polya_szego.quadrature import QuadratureConfig
from polya_szego.rearrange import symmetrize, symmetrize_grid

logger = logging.getLogger(__name__)

MONOTONE_TOLERANCE = 1e-9
KERNEL_TOLERANCE = 1e-10
J_ALPHAS = (0.25, 0.5, 2.0, 4.0)
J_EPSILONS = (1e-2, 1e-3)
J_X0_GRID = tuple(float(x) for x in np.round(np.linspace(-0.9, 0.9, 19), 12))
MAX_RANDOM_NODES = 12
PLATEAU_PROBABILITY = 0.3
QUASICONV_LOG_S = 3.0

TRIAL_SCHEMA = pl.Schema(
    {
        "trial": pl.Int64,
        "seed": pl.Int64,
        "value_original": pl.Float64,
        "value_symmetrized": pl.Float64,
        "gap": pl.Float64,
        "passed": pl.Boolean,
    }
)
SCRIPT_A_SCHEMA = pl.Schema(
    {"q": pl.Float64, "w_star": pl.Float64, "script_a": pl.Float64}
)

Expectation = Literal["monotone", "violation"]


class TrialReport(BaseModel):
    """One comparison of a functional before and after rearrangement."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    experiment: str = Field(description="Experiment that produced the trial")
    inputs: Dict[str, Any] = Field(description="Trial parameters")
    value_original: float
    value_symmetrized: float
    gap: float = Field(description="value_original - value_symmetrized")
    tolerance: float = Field(ge=0.0)
    expect: Expectation = Field(
        description="monotone: pass iff gap >= -tol; violation: pass iff gap < -tol"
    )
    passed: bool
    note: Optional[str] = None

    @model_validator(mode="after")
    def check_gap(self) -> Self:
        scale = max(1.0, abs(self.value_original), abs(self.value_symmetrized))
        if abs(self.gap - (self.value_original - self.value_symmetrized)) > (
            1e-12 * scale
        ):
            raise ValueError("gap must equal value_original - value_symmetrized")
        violated = self.gap < -self.tolerance
        expected = violated if self.expect == "violation" else not violated
        if self.passed != expected:
            raise ValueError(
                f"passed={self.passed} contradicts gap={self.gap} for {self.expect}"
            )
        return self

    @classmethod
    def compare(
        cls,
        experiment: str,
        inputs: Dict[str, Any],
        original: float,
        symmetrized: float,
        tolerance: float,
        expect: Expectation = "monotone",
        note: Optional[str] = None,
    ) -> "TrialReport":
        gap = original - symmetrized
        violated = gap < -tolerance
        return cls(
            experiment=experiment,
            inputs=inputs,
            value_original=original,
            value_symmetrized=symmetrized,
            gap=gap,
            tolerance=tolerance,
            expect=expect,
            passed=violated if expect == "violation" else not violated,
            note=note,
        )


def _quadrature_tolerance(cfg: QuadratureConfig, *values: Any) -> float:
    """Accuracy of a difference of two quadrature results."""
    magnitude = max(abs(v.value) for v in values)
    estimated = sum(v.est_error for v in values)
    return estimated + cfg.abs_tol + cfg.rel_tol * magnitude


def j_rearrangement_gap(
    p: ExponentSpec,
    x0: float,
    alpha: float,
    eps: float,
    cfg: Optional[QuadratureConfig] = None,
) -> TrialReport:
    """J(u) - J(u*) for the tent u = alpha (eps - |x - x0|)_+.

    The trial counts as a confirmed counterexample when the gap lies below
    ten times the quadrature tolerance.

    Raises:
        ParameterError: If the tent parameters are invalid
        NumericError: If quadrature does not converge
    """
    cfg = cfg or QuadratureConfig()
    u = make_hat(x0, alpha, eps)
    original = integrate_functional(u, p, "J", cfg)
    symmetrized = integrate_functional(symmetrize(u), p, "J", cfg)
    return TrialReport.compare(
        "j_rearrangement",
        {"x0": x0, "alpha": alpha, "eps": eps},
        original.value,
        symmetrized.value,
        10.0 * _quadrature_tolerance(cfg, original, symmetrized),
        expect="violation",
    )


def find_j_counterexample(
    p: ExponentSpec,
    x0_grid: Sequence[float] = J_X0_GRID,
    cfg: Optional[QuadratureConfig] = None,
) -> Optional[TrialReport]:
    """First tent (x0 outer, then alpha, then eps) with J(u*) > J(u).

    Returns None when no tent on the grid confirms a violation, which is
    what happens for constant exponents.
    """
    for x0 in x0_grid:
        for alpha in J_ALPHAS:
            for eps in J_EPSILONS:
                report = j_rearrangement_gap(p, x0, alpha, eps, cfg)
                if report.passed:
                    logger.info(
                        "J counterexample found",
                        extra={"x0": x0, "alpha": alpha, "eps": eps, "gap": report.gap},
                    )
                    return report
    return None


class PreconvProbe(BaseModel):
    """Finite-eps gaps of the two-ramp test against their eps -> 0 limit."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    closed_form_gap: float = Field(
        description="K(s,x1) + K(t,x2) - K(m,h) - K(m,-h), m=(s+t)/2, h=(x2-x1)/2"
    )
    closed_form_gap_m: float = Field(description="The same gap written with M = K - s")
    trials: Tuple[TrialReport, ...]
    scaled_gaps: Tuple[float, ...] = Field(description="Finite-eps gap / (2 eps)")
    limit_errors: Tuple[float, ...]
    convergence_orders: Tuple[float, ...] = Field(
        description="log2 ratios of successive limit errors (dyadic eps only)"
    )


def preconv_probe(
    p: ExponentSpec,
    x1: float,
    x2: float,
    s: float,
    t: float,
    eps_list: Sequence[float],
    cfg: Optional[QuadratureConfig] = None,
) -> PreconvProbe:
    """Two-ramp test functions and the limit inequality they lead to.

    For each eps the ramp function of make_double_ramp is compared with its
    rearrangement through I; divided by 2 eps the gap tends to
    K(s, x1) + K(t, x2) - K((s+t)/2, h) - K((s+t)/2, -h), h = (x2 - x1)/2.

    Raises:
        ParameterError: If the ramps are invalid for some eps
        DomainError: If s or t is not positive
    """
    cfg = cfg or QuadratureConfig()
    mean = 0.5 * (s + t)
    half = 0.5 * (x2 - x1)
    closed = eval_K(s, x1, p) + eval_K(t, x2, p)
    closed -= eval_K(mean, half, p) + eval_K(mean, -half, p)
    closed_m = eval_M(s, x1, p) + eval_M(t, x2, p)
    closed_m -= eval_M(mean, half, p) + eval_M(mean, -half, p)
    note = None
    if isinstance(p, TableExponent):
        note = "tabulated exponent: convergence degrades at spline kinks"

    trials, scaled, errors = [], [], []
    for eps in eps_list:
        u = make_double_ramp(x1, x2, s, t, eps)
        u_star = symmetric_double_ramp(x1, x2, s, t, eps)
        original = integrate_functional(u, p, "I", cfg)
        symmetrized = integrate_functional(u_star, p, "I", cfg)
        report = TrialReport.compare(
            "preconv",
            {"x1": x1, "x2": x2, "s": s, "t": t, "eps": eps},
            original.value,
            symmetrized.value,
            max(MONOTONE_TOLERANCE, _quadrature_tolerance(cfg, original, symmetrized)),
            note=note,
        )
        trials.append(report)
        scaled.append(report.gap / (2.0 * eps))
        errors.append(abs(scaled[-1] - closed))

    orders = []
    for (e_big, err_big), (e_small, err_small) in zip(
        zip(eps_list, errors), zip(eps_list[1:], errors[1:])
    ):
        if err_big > 0.0 and err_small > 0.0 and math.isclose(e_big, 2.0 * e_small):
            orders.append(math.log2(err_big / err_small))
    return PreconvProbe(
        closed_form_gap=closed,
        closed_form_gap_m=closed_m,
        trials=tuple(trials),
        scaled_gaps=tuple(scaled),
        limit_errors=tuple(errors),
        convergence_orders=tuple(orders),
    )


def random_piecewise_linear(
    rng: np.random.Generator, n_nodes: int, plateaus: bool = False
) -> PiecewiseLinear:
    """Random u with n_nodes interior nodes at uniform positions and heights.

    With plateaus, each node copies its left neighbour's height with
    probability 0.3, producing flat pieces.

    Raises:
        ParameterError: If n_nodes < 1
    """
    if n_nodes < 1:
        raise ParameterError(f"need at least one interior node, got {n_nodes}")
    positions = np.unique(rng.uniform(-1.0, 1.0, n_nodes))
    positions = positions[(positions > -1.0) & (positions < 1.0)]
    heights = rng.uniform(0.0, 1.0, len(positions))
    if plateaus:
        copy = rng.uniform(0.0, 1.0, len(positions)) < PLATEAU_PROBABILITY
        for i in range(1, len(heights)):
            if copy[i]:
                heights[i] = heights[i - 1]
    return PiecewiseLinear(
        breakpoints=(-1.0, *map(float, positions), 1.0),
        values=(0.0, *map(float, heights), 0.0),
    )


def random_I_trial(
    p: ExponentSpec,
    seed: int,
    n_nodes: int,
    plateaus: bool = False,
    cfg: Optional[QuadratureConfig] = None,
) -> TrialReport:
    """I(u) against I(u*) for a seeded random u; passes iff
    I(u*) <= I(u) + 1e-9."""
    rng = np.random.default_rng(seed)
    u = random_piecewise_linear(rng, n_nodes, plateaus)
    original = integrate_functional(u, p, "I", cfg)
    symmetrized = integrate_functional(symmetrize(u), p, "I", cfg)
    return TrialReport.compare(
        "random_I",
        {"seed": seed, "n_nodes": n_nodes, "plateaus": plateaus},
        original.value,
        symmetrized.value,
        MONOTONE_TOLERANCE,
    )


def quasiconv_trial(
    p: ExponentSpec, m: int, s: Sequence[float], x: Sequence[float]
) -> TrialReport:
    """sum_k K(s_k, x_k) >= 2 K(sum_k s_k / 2, sum_k (-1)^k x_k / 2).

    Raises:
        ParameterError: If m is odd, the sequences do not have m entries, or
            x is not sorted
        DomainError: If some s_k <= 0 or x_k is outside [-1, 1]
    """
    if m < 2 or m % 2 or len(s) != m or len(x) != m:
        raise ParameterError(f"need an even m >= 2 with m values of s and x, got {m}")
    if any(b < a for a, b in zip(x, x[1:])):
        raise ParameterError("x must be sorted ascending")
    lhs = math.fsum(eval_K(s_k, x_k, p) for s_k, x_k in zip(s, x))
    centre = 0.5 * math.fsum((-1.0) ** k * x_k for k, x_k in enumerate(x, start=1))
    rhs = 2.0 * eval_K(0.5 * math.fsum(s), centre, p)
    return TrialReport.compare(
        "quasiconv",
        {"m": m, "s": list(s), "x": list(x)},
        lhs,
        rhs,
        KERNEL_TOLERANCE,
    )


def quasiconv_scan(
    p: ExponentSpec, trials: int, seed: int, m_values: Sequence[int] = (2, 4)
) -> Optional[TrialReport]:
    """Random search for an instance violating the quasi-convexity
    inequality; returns the first one found."""
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        m = int(rng.choice(m_values))
        s = np.exp(rng.uniform(-QUASICONV_LOG_S, QUASICONV_LOG_S, m))
        x = np.sort(rng.uniform(-1.0, 1.0, m))
        report = quasiconv_trial(p, m, s.tolist(), x.tolist())
        if not report.passed:
            return report
    return None


def script_A_profile(q_values: Sequence[float]) -> pl.DataFrame:
    """Table of (q, argmax w, script_A(q)) for plotting."""
    rows = []
    for q in q_values:
        w_star, value = script_A_argmax(float(q))
        rows.append({"q": float(q), "w_star": w_star, "script_a": value})
    return pl.DataFrame(rows, schema=SCRIPT_A_SCHEMA)


class SuiteReport(BaseModel):
    """Batch of random I trials."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base_seed: int
    trials: Tuple[TrialReport, ...]
    passed: int = Field(ge=0)
    failed: int = Field(ge=0)
    errors: Dict[str, Any] = Field(description="ErrorCollector summary")

    @property
    def all_passed(self) -> bool:
        return self.failed == 0 and self.errors.get("error_count", 0) == 0


def trial_seeds(base_seed: int, trials: int) -> List[int]:
    """Per-trial seeds spawned from the base seed."""
    children = np.random.SeedSequence(base_seed).spawn(trials)
    return [int(child.generate_state(1)[0]) for child in children]


class ISuiteRunner:
    """Runs random I trials on a thread pool; reports keep trial order."""

    DEFAULT_MAX_WORKERS = 4

    def __init__(
        self,
        p: ExponentSpec,
        max_workers: Optional[int] = None,
        max_nodes: int = MAX_RANDOM_NODES,
        plateaus: bool = False,
        cfg: Optional[QuadratureConfig] = None,
    ):
        """Initialize ISuiteRunner.

        Args:
            p: Exponent under test
            max_workers: Worker threads (default: 4)
            max_nodes: Upper bound on interior nodes of the random u
            plateaus: Generate functions with flat pieces
            cfg: Quadrature tolerances
        """
        self.p = p
        self.max_workers = max_workers or self.DEFAULT_MAX_WORKERS
        self.max_nodes = max_nodes
        self.plateaus = plateaus
        self.cfg = cfg or QuadratureConfig()

    def _trial(self, seed: int) -> TrialReport | ToolkitError:
        n_nodes = 1 + seed % self.max_nodes
        try:
            return random_I_trial(self.p, seed, n_nodes, self.plateaus, self.cfg)
        except ToolkitError as e:
            return e

    def run(self, trials: int, seed: int) -> SuiteReport:
        metrics = RunMetrics(start_time=datetime.now())
        collector = ErrorCollector()
        seeds = trial_seeds(seed, trials)
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            outcomes = list(executor.map(self._trial, seeds))

        reports = []
        for index, (trial_seed, outcome) in enumerate(zip(seeds, outcomes)):
            if isinstance(outcome, ToolkitError):
                collector.add_error(
                    f"Trial {index} failed: {outcome}",
                    {"trial": index, "seed": trial_seed},
                )
                metrics.add_error(str(outcome))
                continue
            metrics.record_trial(outcome.passed)
            if not outcome.passed:
                collector.add_warning(
                    f"Trial {index} increased I",
                    {"trial": index, "seed": trial_seed, "gap": outcome.gap},
                )
            reports.append(outcome)
        metrics.finish(datetime.now())
        if collector.has_errors() or collector.has_warnings():
            summary = collector.get_error_summary()
            logger.warning(
                "I suite has failed trials",
                extra={
                    "error_count": summary["error_count"],
                    "warning_count": summary["warning_count"],
                },
            )
        logger.info(
            "I suite complete",
            extra={"base_seed": seed, **metrics.to_summary_dict()},
        )
        return SuiteReport(
            base_seed=seed,
            trials=tuple(reports),
            passed=metrics.trials_passed,
            failed=metrics.trials_failed,
            errors=collector.get_error_summary(),
        )


def i_suite(
    p: ExponentSpec,
    trials: int,
    seed: int,
    threads: Optional[int] = None,
    plateaus: bool = False,
    cfg: Optional[QuadratureConfig] = None,
) -> SuiteReport:
    """Random I trials with seeds derived from ``seed``; the report does not
    depend on the thread count."""
    runner = ISuiteRunner(p, max_workers=threads, plateaus=plateaus, cfg=cfg)
    return runner.run(trials, seed)


def trials_frame(reports: Sequence[TrialReport]) -> pl.DataFrame:
    """Per-trial gaps for a CSV dump."""
    rows = [
        {
            "trial": index,
            "seed": int(report.inputs.get("seed", -1)),
            "value_original": report.value_original,
            "value_symmetrized": report.value_symmetrized,
            "gap": report.gap,
            "passed": report.passed,
        }
        for index, report in enumerate(reports)
    ]
    return pl.DataFrame(rows, schema=TRIAL_SCHEMA)


class Grid2D(BaseModel):
    """Nodal samples of u on a centred grid over omega x (-1, 1).

    ``samples[i][j]`` is u at x' = (i - (nx-1)/2) hx, y = (j - (ny-1)/2) hy.
    The first and last y rows are the boundary and must vanish.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    nx: int = Field(ge=2, description="Nodes along x'")
    ny: int = Field(ge=3, description="Nodes along y")
    hx: float = Field(gt=0.0, description="Node spacing along x'")
    hy: float = Field(gt=0.0, description="Node spacing along y")
    samples: Tuple[Tuple[float, ...], ...]

    @model_validator(mode="after")
    def check_samples(self) -> Self:
        if len(self.samples) != self.nx or any(
            len(column) != self.ny for column in self.samples
        ):
            raise ValueError(f"samples must be {self.nx} columns of {self.ny} values")
        values = np.asarray(self.samples)
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise ValueError("samples must be finite and nonnegative")
        if np.any(values[:, 0] != 0.0) or np.any(values[:, -1] != 0.0):
            raise ValueError("samples must vanish on the y boundary rows")
        if 0.5 * (self.ny - 1) * self.hy > 1.0 + 1e-12:
            raise ValueError("the y extent must stay inside [-1, 1]")
        return self

    @property
    def x_nodes(self) -> np.ndarray:
        return (np.arange(self.nx) - 0.5 * (self.nx - 1)) * self.hx

    @property
    def y_nodes(self) -> np.ndarray:
        return (np.arange(self.ny) - 0.5 * (self.ny - 1)) * self.hy

    @classmethod
    def from_function(
        cls, f: Callable[[np.ndarray, np.ndarray], np.ndarray], nx: int, ny: int
    ) -> "Grid2D":
        """Sample f(x', y) on [-1, 1] x [-1, 1]; boundary rows set to 0."""
        hx, hy = 2.0 / (nx - 1), 2.0 / (ny - 1)
        xs = (np.arange(nx) - 0.5 * (nx - 1)) * hx
        ys = (np.arange(ny) - 0.5 * (ny - 1)) * hy
        values = np.maximum(f(xs[:, None], ys[None, :]), 0.0)
        values[:, 0] = values[:, -1] = 0.0
        return cls(
            nx=nx, ny=ny, hx=hx, hy=hy, samples=tuple(map(tuple, values.tolist()))
        )

    def symmetrized(self) -> "Grid2D":
        """Column-wise Steiner symmetrization in y."""
        columns = tuple(
            tuple(symmetrize_grid(column, self.hy)) for column in self.samples
        )
        return self.model_copy(update={"samples": columns})


class ColumnExponents(BaseModel):
    """p(x', y) given as an exponent in y for each x' column.

    A single entry applies to every column.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    columns: Tuple[ExponentSpec, ...] = Field(min_length=1)

    def node_values(self, nx: int, ys: np.ndarray) -> np.ndarray:
        """p at every (column, y) pair, shape (nx, len(ys))."""
        if len(self.columns) not in (1, nx):
            raise ParameterError(
                f"need 1 or {nx} column exponents, got {len(self.columns)}"
            )
        specs = self.columns * nx if len(self.columns) == 1 else self.columns
        return np.stack([spec.p_values(ys) for spec in specs])


class SteinerDemo(BaseModel):
    """Discrete I of a grid field before and after Steiner symmetrization.

    Illustrative only; grid bias can hide or fake small violations.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    I_original: float
    I_symmetrized: float
    hx: float
    hy: float
    note: str = "illustrative grid evaluation, not a certificate"


def discrete_I(grid: Grid2D, p2d: ColumnExponents) -> float:
    """Midpoint rule for int (1 + |grad u|^2)^(p/2) over the grid cells.

    Gradients are central differences at cell midpoints; p is averaged
    over the two neighbouring columns at the midpoint height.
    """
    u = np.asarray(grid.samples)
    y_mid = grid.y_nodes[:-1] + 0.5 * grid.hy
    p_nodes = p2d.node_values(grid.nx, y_mid)
    p_mid = 0.5 * (p_nodes[:-1] + p_nodes[1:])
    du_dx = 0.5 * ((u[1:, :-1] - u[:-1, :-1]) + (u[1:, 1:] - u[:-1, 1:])) / grid.hx
    du_dy = 0.5 * ((u[:-1, 1:] - u[:-1, :-1]) + (u[1:, 1:] - u[1:, :-1])) / grid.hy
    density = np.exp(0.5 * p_mid * np.log1p(du_dx**2 + du_dy**2))
    return float(math.fsum(density.ravel()) * grid.hx * grid.hy)


def steiner_grid_demo(p2d: ColumnExponents, grid: Grid2D) -> SteinerDemo:
    """Discrete I before and after symmetrizing every column in y."""
    result = SteinerDemo(
        I_original=discrete_I(grid, p2d),
        I_symmetrized=discrete_I(grid.symmetrized(), p2d),
        hx=grid.hx,
        hy=grid.hy,
    )
    logger.debug(
        "Steiner demo evaluated",
        extra={"I_original": result.I_original, "I_symmetrized": result.I_symmetrized},
    )
    return result
