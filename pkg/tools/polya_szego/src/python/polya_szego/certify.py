"""Computer-assisted certificates for the bounds on A(w, q).

Each region is tiled with its initial mesh. The enclosure of the bounded
quantity is evaluated on every cell and cells whose upper bound exceeds
the threshold are bisected along their longest normalized edge until
every leaf passes, a point provably exceeds the threshold, or the cell
budget runs out. Cells are processed in fixed-size chunks, mapped over a
thread pool in submission order so results do not depend on scheduling.
"""

import itertools
import logging
import math
import time
from collections.abc import Callable, Iterable, Iterator
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Any, List, Literal, NamedTuple, Optional, Tuple

from typing_extensions import Self

import numpy as np
import polars as pl
from data_processing.csv_writer import CsvWriter
from models.run_metrics import RunMetrics
from pydantic import BaseModel, ConfigDict, Field, model_validator

from polya_szego.conditions import A_value
from polya_szego.enclosures import (
    ChartName,
    MonotoneReport,
    Quantity,
    enclose,
    enclose_extended,
    verify_monotone_claims,
)
from polya_szego.regions import RegionSpec, region_catalog
from polya_szego.search import bisect_sign_change, golden_section_max

logger = logging.getLogger(__name__)

DEFAULT_CELL_BUDGET = 250_000_000
CHUNK_CELLS = 500_000
# Cells this close above the threshold get an mpmath re-evaluation.
EXTENDED_MARGIN = 1e-12
MAX_EXTENDED_CELLS = 10_000
CALC_REGIONS = ("R1", "R2", "R4", "R5", "R3-dr", "Ainf-dd", "R3-max")
CALC_BOUND_REGIONS = ("R1", "R2", "R4", "R5", "R3-max")
CALC_THRESHOLD = 0.63
CALC_HALF_REGIONS = ("R6", "R7", "R8", "R9")
CALC_HALF_THRESHOLD = 0.5
A_INF_BRACKET = (1.0, 4.0)
A_INF_TOLERANCE = 1e-12

CELL_DUMP_SCHEMA = pl.Schema(
    {
        "x_lo": pl.Float64,
        "x_hi": pl.Float64,
        "y_lo": pl.Float64,
        "y_hi": pl.Float64,
        "upper": pl.Float64,
        "depth": pl.Int64,
        "passed": pl.Boolean,
    }
)


class CertificationError(Exception):
    """Exception raised when a certificate another result depends on fails."""

    pass


class Certificate(BaseModel):
    """Outcome of certifying one region."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    region: str
    chart: ChartName
    quantity: Quantity
    cells_total: int = Field(ge=0, description="Cell enclosures evaluated")
    cells_refined: int = Field(ge=0, description="Cells produced by bisection")
    sup_bound: float = Field(description="Maximum upper bound over the leaves")
    threshold: float
    passed: bool
    wall_time: float = Field(ge=0.0, description="Seconds")
    witness: Optional[Tuple[float, float, float, float]] = Field(
        default=None, description="Lexicographically smallest failing cell"
    )
    budget_exhausted: bool = False
    early_abort: bool = Field(
        default=False, description="A cell centre provably exceeds the threshold"
    )
    extended_cells: int = Field(default=0, ge=0)
    monotone_claims: Optional[MonotoneReport] = None

    @model_validator(mode="after")
    def passed_matches_bound(self) -> Self:
        if self.passed != (self.sup_bound <= self.threshold):
            raise ValueError(
                f"passed={self.passed} contradicts sup_bound={self.sup_bound} "
                f"and threshold={self.threshold}"
            )
        if self.passed and self.witness is not None:
            raise ValueError("a passing certificate has no witness")
        return self


class AInfMaximum(BaseModel):
    """Location and value of the maximum of A(w, inf) on [1, 4]."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    w_star: float
    value: float
    certified_concave: bool
    concavity_bound: float = Field(
        description="Certified upper bound of the second derivative"
    )


class MasterCertificate(BaseModel):
    """The region certificates behind one global bound."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["calc", "calc_half"]
    certificates: Tuple[Certificate, ...]
    overall_bound: float
    bound_threshold: float
    passed: bool
    failing_regions: Tuple[str, ...] = ()
    wall_time: float = Field(ge=0.0)
    a_inf_maximum: Optional[AInfMaximum] = None

    @model_validator(mode="after")
    def passed_is_consistent(self) -> Self:
        if self.passed and (
            self.failing_regions or self.overall_bound > self.bound_threshold
        ):
            raise ValueError("a passing master certificate has a failing part")
        return self


class CellBatch(NamedTuple):
    """Cells as parallel coordinate arrays."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    depth: np.ndarray

    @property
    def count(self) -> int:
        return len(self.x_lo)

    def take(self, index: np.ndarray) -> "CellBatch":
        return CellBatch(*(field[index] for field in self))

    def slices(self, size: int) -> Iterator["CellBatch"]:
        for start in range(0, self.count, size):
            yield CellBatch(*(field[start : start + size] for field in self))

    @classmethod
    def concat(cls, batches: List["CellBatch"]) -> "CellBatch":
        if not batches:
            return cls.empty()
        return cls(*(np.concatenate(fields) for fields in zip(*batches)))

    @classmethod
    def empty(cls) -> "CellBatch":
        return cls(*(np.empty(0) for _ in range(4)), np.empty(0, dtype=np.int64))

    def cell(self, i: int) -> Tuple[float, float, float, float]:
        return (
            float(self.x_lo[i]),
            float(self.x_hi[i]),
            float(self.y_lo[i]),
            float(self.y_hi[i]),
        )

    def first_lexicographic(self) -> Tuple[float, float, float, float]:
        order = np.lexsort((self.y_hi, self.x_hi, self.y_lo, self.x_lo))
        return self.cell(int(order[0]))


def axis_cells(lo: float, hi: float, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """Initial mesh along one axis; the last cell is clipped to hi."""
    if hi <= lo:
        return np.array([lo]), np.array([hi])
    n = max(1, math.ceil((hi - lo) / step - 1e-9))
    edges = np.minimum(lo + step * np.arange(n + 1, dtype=float), hi)
    edges[-1] = hi
    return edges[:-1], edges[1:]


def initial_cell_count(spec: RegionSpec) -> int:
    x_cells = axis_cells(spec.x_lo, spec.x_hi, spec.step1)[0]
    y_cells = axis_cells(spec.y_lo, spec.y_hi, spec.step2)[0]
    return len(x_cells) * len(y_cells)


def initial_batches(spec: RegionSpec, chunk: int = CHUNK_CELLS) -> Iterator[CellBatch]:
    """Row-major initial tiling, generated lazily in chunks of whole rows."""
    x_lo, x_hi = axis_cells(spec.x_lo, spec.x_hi, spec.step1)
    y_lo, y_hi = axis_cells(spec.y_lo, spec.y_hi, spec.step2)
    per_row = len(y_lo)
    rows = max(1, chunk // per_row)
    for start in range(0, len(x_lo), rows):
        stop = min(start + rows, len(x_lo))
        n_rows = stop - start
        yield CellBatch(
            np.repeat(x_lo[start:stop], per_row),
            np.repeat(x_hi[start:stop], per_row),
            np.tile(y_lo, n_rows),
            np.tile(y_hi, n_rows),
            np.zeros(n_rows * per_row, dtype=np.int64),
        )


def bisect_cells(
    cells: CellBatch, step1: float, step2: float
) -> Tuple[CellBatch, np.ndarray]:
    """Split cells along the longer edge measured in initial steps.

    Returns:
        Tuple of (children, splittable); children holds the first halves
        followed by the second halves of the splittable cells only
    """
    along_x = (cells.x_hi - cells.x_lo) / step1 >= (cells.y_hi - cells.y_lo) / step2
    x_mid = 0.5 * (cells.x_lo + cells.x_hi)
    y_mid = 0.5 * (cells.y_lo + cells.y_hi)
    splittable = np.where(
        along_x,
        (cells.x_lo < x_mid) & (x_mid < cells.x_hi),
        (cells.y_lo < y_mid) & (y_mid < cells.y_hi),
    )
    parents = cells.take(splittable)
    along_x, x_mid, y_mid = along_x[splittable], x_mid[splittable], y_mid[splittable]
    depth = parents.depth + 1
    first = CellBatch(
        parents.x_lo,
        np.where(along_x, x_mid, parents.x_hi),
        parents.y_lo,
        np.where(along_x, parents.y_hi, y_mid),
        depth,
    )
    second = CellBatch(
        np.where(along_x, x_mid, parents.x_lo),
        parents.x_hi,
        np.where(along_x, parents.y_lo, y_mid),
        parents.y_hi,
        depth,
    )
    return CellBatch.concat([first, second]), splittable


class RegionVerifier:
    """Branch-and-bound certificate for one region.

    A verifier runs once; build a new one per certificate.
    """

    DEFAULT_MAX_WORKERS = 4

    def __init__(
        self,
        spec: RegionSpec,
        budget: int = DEFAULT_CELL_BUDGET,
        max_workers: Optional[int] = None,
        use_monotone_factors: bool = True,
        record_cells: bool = False,
    ):
        """Initialize RegionVerifier.

        Args:
            spec: Region, quantity and threshold to certify
            budget: Maximum number of cell enclosures to evaluate
            max_workers: Threads evaluating chunks (default: 4)
            use_monotone_factors: Tighten (w, q) bounds with certified
                factor monotonicity when the region allows it
            record_cells: Keep every leaf for a later CSV dump
        """
        self.spec = spec
        self.budget = budget
        self.max_workers = max_workers or self.DEFAULT_MAX_WORKERS
        self.use_monotone_factors = use_monotone_factors and spec.monotone_factors
        self.record_cells = record_cells
        self.claims: Optional[MonotoneReport] = None
        self.metrics = RunMetrics(start_time=datetime.now())
        self._leaf_sup = -math.inf
        self._extended = 0
        self._leaves: List[Tuple[CellBatch, np.ndarray, bool]] = []

    def _enclose(self, cells: CellBatch) -> Tuple[np.ndarray, np.ndarray]:
        bounds = (cells.x_lo, cells.x_hi, cells.y_lo, cells.y_hi)
        return enclose(self.spec.chart, self.spec.quantity, bounds, self.claims)

    def _enclose_centres(self, cells: CellBatch) -> np.ndarray:
        x = 0.5 * (cells.x_lo + cells.x_hi)
        y = 0.5 * (cells.y_lo + cells.y_hi)
        return enclose(self.spec.chart, self.spec.quantity, (x, x, y, y))[0]

    def _map(
        self, function: Callable[[CellBatch], Any], batches: Iterable[CellBatch]
    ) -> Iterator[Tuple[CellBatch, Any]]:
        """Apply function to batches, max_workers at a time, in order."""
        if self.max_workers <= 1:
            for batch in batches:
                yield batch, function(batch)
            return
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            for window in itertools.batched(batches, self.max_workers):
                yield from zip(window, executor.map(function, window))

    def _refine_extended(self, cells: CellBatch, upper: np.ndarray) -> np.ndarray:
        """Re-evaluate near-threshold failing cells in extended precision."""
        near = (upper > self.spec.threshold) & (
            upper - self.spec.threshold <= EXTENDED_MARGIN
        )
        room = MAX_EXTENDED_CELLS - self._extended
        indices = np.flatnonzero(near)[: max(room, 0)]
        if len(indices) == 0:
            return upper
        upper = upper.copy()
        for i in indices:
            _, hi = enclose_extended(
                self.spec.chart, self.spec.quantity, cells.cell(int(i)), self.claims
            )
            upper[i] = min(upper[i], hi)
        self._extended += len(indices)
        return upper

    def _sweep(self, batches: Iterable[CellBatch]) -> Tuple[CellBatch, np.ndarray]:
        """Evaluate cells; keep passing leaves and return the failing ones."""
        failing: List[CellBatch] = []
        failing_upper: List[np.ndarray] = []
        for cells, (_, upper) in self._map(self._enclose, batches):
            self.metrics.add_cells(cells.count)
            if self.spec.extended_precision and self.spec.chart == "w,q":
                upper = self._refine_extended(cells, upper)
            ok = upper <= self.spec.threshold
            if np.any(ok):
                self._leaf_sup = max(self._leaf_sup, float(np.max(upper[ok])))
            if self.record_cells:
                self._leaves.append((cells.take(ok), upper[ok], True))
            if not np.all(ok):
                failing.append(cells.take(~ok))
                failing_upper.append(upper[~ok])
        if not failing:
            return CellBatch.empty(), np.empty(0)
        return CellBatch.concat(failing), np.concatenate(failing_upper)

    def _certain_violations(self, cells: CellBatch) -> np.ndarray:
        lower = [
            centre_lo
            for _, centre_lo in self._map(
                self._enclose_centres, cells.slices(CHUNK_CELLS)
            )
        ]
        return np.concatenate(lower) > self.spec.threshold

    def _finish(
        self,
        started: float,
        pending: CellBatch,
        pending_upper: np.ndarray,
        budget_exhausted: bool = False,
        early_abort: bool = False,
        witness_cells: Optional[CellBatch] = None,
    ) -> Certificate:
        sup_bound = self._leaf_sup
        witness = None
        if pending.count:
            sup_bound = max(sup_bound, float(np.max(pending_upper)))
            source = pending if witness_cells is None else witness_cells
            witness = source.first_lexicographic()
            if self.record_cells:
                self._leaves.append((pending, pending_upper, False))
        self.metrics.finish(datetime.now())
        certificate = Certificate(
            region=self.spec.name,
            chart=self.spec.chart,
            quantity=self.spec.quantity,
            cells_total=self.metrics.cells_evaluated,
            cells_refined=self.metrics.cells_refined,
            sup_bound=sup_bound,
            threshold=self.spec.threshold,
            passed=witness is None and sup_bound <= self.spec.threshold,
            wall_time=time.perf_counter() - started,
            witness=witness,
            budget_exhausted=budget_exhausted,
            early_abort=early_abort,
            extended_cells=self._extended,
            monotone_claims=self.claims,
        )
        logger.info(
            "Region certificate complete",
            extra={
                "region": certificate.region,
                "passed": certificate.passed,
                "sup_bound": certificate.sup_bound,
                "threshold": certificate.threshold,
                **self.metrics.to_summary_dict(),
            },
        )
        return certificate

    def run(self) -> Certificate:
        """Certify the region.

        Returns:
            Certificate; failing ones carry the lexicographically smallest
            failing cell as witness
        """
        started = time.perf_counter()
        spec = self.spec
        if self.use_monotone_factors:
            self.claims = verify_monotone_claims(spec.name, spec.bounds())

        initial = initial_cell_count(spec)
        if initial > self.budget:
            logger.warning(
                "Initial mesh exceeds the cell budget",
                extra={"region": spec.name, "cells": initial, "budget": self.budget},
            )
            whole = CellBatch(
                *(np.array([b]) for b in spec.bounds()), np.zeros(1, dtype=np.int64)
            )
            return self._finish(
                started, whole, np.array([math.inf]), budget_exhausted=True
            )

        pending, pending_upper = self._sweep(initial_batches(spec))
        rounds = 0
        while pending.count:
            rounds += 1
            certain = self._certain_violations(pending)
            if np.any(certain):
                return self._finish(
                    started,
                    pending,
                    pending_upper,
                    early_abort=True,
                    witness_cells=pending.take(certain),
                )
            if self.metrics.cells_evaluated + 2 * pending.count > self.budget:
                return self._finish(
                    started, pending, pending_upper, budget_exhausted=True
                )
            children, splittable = bisect_cells(pending, spec.step1, spec.step2)
            if not np.all(splittable):
                # Floating-point point cells cannot be refined further.
                return self._finish(
                    started,
                    pending,
                    pending_upper,
                    witness_cells=pending.take(~splittable),
                )
            self.metrics.add_cells(0, refined=children.count)
            logger.debug(
                "Refinement round",
                extra={"region": spec.name, "round": rounds, "cells": children.count},
            )
            pending, pending_upper = self._sweep(children.slices(CHUNK_CELLS))
        return self._finish(started, pending, pending_upper)

    def cell_frame(self) -> pl.DataFrame:
        """Every recorded leaf with its upper bound and pass flag."""
        if not self._leaves:
            return pl.DataFrame(schema=CELL_DUMP_SCHEMA)
        columns: dict[str, list[np.ndarray]] = {
            name: [] for name in CELL_DUMP_SCHEMA.names()
        }
        for cells, upper, passed in self._leaves:
            columns["x_lo"].append(cells.x_lo)
            columns["x_hi"].append(cells.x_hi)
            columns["y_lo"].append(cells.y_lo)
            columns["y_hi"].append(cells.y_hi)
            columns["upper"].append(upper)
            columns["depth"].append(cells.depth.astype(np.int64))
            columns["passed"].append(np.full(cells.count, passed))
        data = {name: np.concatenate(parts) for name, parts in columns.items()}
        return pl.DataFrame(data, schema=CELL_DUMP_SCHEMA)


def verify_region(
    spec: RegionSpec,
    budget: int = DEFAULT_CELL_BUDGET,
    threshold_scale: float = 1.0,
    step_scale: float = 1.0,
    threads: Optional[int] = None,
    use_monotone_factors: bool = True,
    dump_path: Optional[str] = None,
) -> Certificate:
    """Certify that the region's quantity stays at or below its threshold.

    Args:
        spec: Catalog region or a custom one
        budget: Maximum number of cell enclosures
        threshold_scale: Multiplies the threshold of A-bound regions
        step_scale: Multiplies both initial mesh steps
        threads: Worker threads for chunk evaluation
        use_monotone_factors: Allow the factor bound in the (w, q) chart
        dump_path: Write every leaf cell to this CSV file

    Raises:
        CsvWriteError: If the cell dump cannot be written
    """
    scaled = spec.scaled(threshold_scale=threshold_scale, step_scale=step_scale)
    verifier = RegionVerifier(
        scaled,
        budget=budget,
        max_workers=threads,
        use_monotone_factors=use_monotone_factors,
        record_cells=dump_path is not None,
    )
    certificate = verifier.run()
    if dump_path is not None:
        CsvWriter(schema=CELL_DUMP_SCHEMA).write_dataframe(
            verifier.cell_frame(), dump_path
        )
    return certificate


def a_inf_derivative(w: float) -> float:
    """d/dw A(w, inf) for w > 0."""
    log_term = math.log1p(w)
    return -0.5 * (1.0 / (1.0 + w) + 3.0 * (w / (1.0 + w) - log_term) / (w * w))


def maximize_A_inf(
    concavity: Optional[Certificate] = None,
    budget: int = DEFAULT_CELL_BUDGET,
    threads: Optional[int] = None,
) -> AInfMaximum:
    """Maximum of A(w, inf) on [1, 4], located once concavity is certified.

    Concavity makes the derivative decreasing, so golden-section search
    followed by bisection on the derivative pins down the unique maximizer.

    Raises:
        CertificationError: If the second derivative is not certified
            negative on [1, 4]
    """
    if concavity is None:
        concavity = verify_region(
            region_catalog()["Ainf-dd"], budget=budget, threads=threads
        )
    if not (concavity.passed and concavity.sup_bound < 0.0):
        raise CertificationError(
            "Concavity of A(w, inf) on [1, 4] is not certified: "
            f"sup of the second derivative is {concavity.sup_bound}"
        )

    a, b = A_INF_BRACKET
    w_golden, _ = golden_section_max(lambda w: A_value(w, math.inf), a, b, 1e-6)
    lo, hi = max(a, w_golden - 1e-3), min(b, w_golden + 1e-3)
    if a_inf_derivative(lo) < 0.0 or a_inf_derivative(hi) > 0.0:
        lo, hi = a, b
    w_star = bisect_sign_change(a_inf_derivative, lo, hi, A_INF_TOLERANCE)
    return AInfMaximum(
        w_star=w_star,
        value=A_value(w_star, math.inf),
        certified_concave=True,
        concavity_bound=concavity.sup_bound,
    )


def _master(
    name: Literal["calc", "calc_half"],
    certificates: List[Certificate],
    bound_regions: Tuple[str, ...],
    bound_threshold: float,
    started: float,
    a_inf_maximum: Optional[AInfMaximum] = None,
    extra_failures: Tuple[str, ...] = (),
) -> MasterCertificate:
    overall = max(c.sup_bound for c in certificates if c.region in bound_regions)
    failing = tuple(c.region for c in certificates if not c.passed) + extra_failures
    passed = not failing and overall <= bound_threshold
    master = MasterCertificate(
        name=name,
        certificates=tuple(certificates),
        overall_bound=overall,
        bound_threshold=bound_threshold,
        passed=passed,
        failing_regions=failing,
        wall_time=time.perf_counter() - started,
        a_inf_maximum=a_inf_maximum,
    )
    logger.info(
        "Master certificate complete",
        extra={
            "certificate": name,
            "passed": passed,
            "overall_bound": overall,
            "failing_regions": list(failing),
        },
    )
    return master


def verify_calc(
    budget: int = DEFAULT_CELL_BUDGET,
    threshold_scale: float = 1.0,
    step_scale: float = 1.0,
    threads: Optional[int] = None,
    use_monotone_factors: bool = True,
) -> MasterCertificate:
    """Certify A(w, q) <= 0.63 on the whole quadrant.

    Covers R1, R2, R4 and R5, then R3 through the sign of d/dr A, the
    concavity of A(w, inf) and the bound on the r = 0 edge. The budget
    applies to each region separately.
    """
    started = time.perf_counter()
    catalog = region_catalog()
    certificates = [
        verify_region(
            catalog[name],
            budget=budget,
            threshold_scale=threshold_scale,
            step_scale=step_scale,
            threads=threads,
            use_monotone_factors=use_monotone_factors,
        )
        for name in CALC_REGIONS
    ]
    concavity = certificates[CALC_REGIONS.index("Ainf-dd")]
    try:
        maximum: Optional[AInfMaximum] = maximize_A_inf(concavity)
        extra: Tuple[str, ...] = ()
    except CertificationError as e:
        logger.warning(str(e))
        maximum, extra = None, ("A_inf-max",)
    return _master(
        "calc",
        certificates,
        CALC_BOUND_REGIONS,
        CALC_THRESHOLD * threshold_scale,
        started,
        a_inf_maximum=maximum,
        extra_failures=extra,
    )


def verify_calc_half(
    budget: int = DEFAULT_CELL_BUDGET,
    threshold_scale: float = 1.0,
    step_scale: float = 1.0,
    threads: Optional[int] = None,
    use_monotone_factors: bool = True,
) -> MasterCertificate:
    """Certify A(w, q) <= 1/2 for 0 <= q <= 1.36 and all w > 0."""
    started = time.perf_counter()
    catalog = region_catalog()
    certificates = [
        verify_region(
            catalog[name],
            budget=budget,
            threshold_scale=threshold_scale,
            step_scale=step_scale,
            threads=threads,
            use_monotone_factors=use_monotone_factors,
        )
        for name in CALC_HALF_REGIONS
    ]
    return _master(
        "calc_half",
        certificates,
        CALC_HALF_REGIONS,
        CALC_HALF_THRESHOLD * threshold_scale,
        started,
    )
