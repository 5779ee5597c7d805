"""Tests for the region certificates and the master certificates."""

import math

import numpy as np
import polars as pl
import pytest
from polya_szego.certify import (
    CELL_DUMP_SCHEMA,
    CellBatch,
    Certificate,
    CertificationError,
    a_inf_derivative,
    axis_cells,
    bisect_cells,
    initial_batches,
    initial_cell_count,
    maximize_A_inf,
    verify_calc,
    verify_calc_half,
    verify_region,
)
from polya_szego.regions import get_region
from pydantic import ValidationError

W_STAR = 1.816960565240
A_INF_MAX = 0.627178211634


def _certificate(**overrides) -> Certificate:
    values = dict(
        region="Ainf-dd",
        chart="w,r",
        quantity="Ainf_dd",
        cells_total=1000,
        cells_refined=0,
        sup_bound=-0.0029,
        threshold=0.0,
        passed=True,
        wall_time=0.0,
    )
    values.update(overrides)
    return Certificate(**values)


class TestCells:
    """Unit tests for the initial mesh and bisection."""

    def test_axis_cells_clip_last_cell(self):
        """Test the last cell ends exactly at the upper bound."""
        lo, hi = axis_cells(0.0, 1.0, 0.3)

        np.testing.assert_allclose(lo, [0.0, 0.3, 0.6, 0.9])
        np.testing.assert_allclose(hi, [0.3, 0.6, 0.9, 1.0])
        assert hi[-1] == 1.0

    def test_axis_cells_degenerate_axis(self):
        """Test a zero-width axis is a single point cell."""
        lo, hi = axis_cells(0.0, 0.0, 1.0)

        assert list(lo) == [0.0] and list(hi) == [0.0]

    def test_initial_cell_count(self):
        """Test the R1 mesh has 100 x 10 cells."""
        assert initial_cell_count(get_region("R1")) == 1000
        assert initial_cell_count(get_region("Ainf-dd")) == 1000

    def test_initial_batches_cover_the_mesh(self):
        """Test chunked generation matches a single chunk."""
        spec = get_region("R1")
        chunked = CellBatch.concat(list(initial_batches(spec, chunk=25)))
        whole = CellBatch.concat(list(initial_batches(spec, chunk=10_000)))

        assert chunked.count == whole.count == 1000
        for left, right in zip(chunked, whole):
            np.testing.assert_array_equal(left, right)

    def test_bisect_splits_longer_normalized_edge(self):
        """Test the split direction and the unsplittable point cell."""
        cells = CellBatch(
            np.array([0.0, 0.5]),
            np.array([2.0, 0.5]),
            np.array([0.0, 0.3]),
            np.array([1.0, 0.3]),
            np.zeros(2, dtype=np.int64),
        )

        children, splittable = bisect_cells(cells, 1.0, 1.0)

        assert list(splittable) == [True, False]
        assert children.cell(0) == (0.0, 1.0, 0.0, 1.0)
        assert children.cell(1) == (1.0, 2.0, 0.0, 1.0)
        assert list(children.depth) == [1, 1]

    def test_bisect_uses_initial_steps(self):
        """Test edges are compared in units of the initial steps."""
        cells = CellBatch(
            np.array([0.0]),
            np.array([2.0]),
            np.array([0.0]),
            np.array([1.0]),
            np.zeros(1, dtype=np.int64),
        )

        children, _ = bisect_cells(cells, 10.0, 1.0)

        assert children.cell(0) == (0.0, 2.0, 0.0, 0.5)

    def test_first_lexicographic(self):
        """Test the witness order is (x_lo, y_lo, x_hi, y_hi)."""
        cells = CellBatch(
            np.array([0.5, 0.1, 0.1]),
            np.array([0.6, 0.2, 0.2]),
            np.array([0.0, 0.4, 0.3]),
            np.array([0.1, 0.5, 0.4]),
            np.zeros(3, dtype=np.int64),
        )

        assert cells.first_lexicographic() == (0.1, 0.2, 0.3, 0.4)


class TestCertificate:
    """Unit tests for the Certificate model."""

    def test_passed_must_match_bound(self):
        """Test passed disagreeing with sup_bound <= threshold."""
        with pytest.raises(ValidationError) as exc_info:
            _certificate(sup_bound=0.1)

        assert "contradicts" in str(exc_info.value)

    def test_passing_certificate_has_no_witness(self):
        """Test a passing certificate cannot carry a witness."""
        with pytest.raises(ValidationError) as exc_info:
            _certificate(witness=(1.0, 1.1, 0.0, 0.0))

        assert "no witness" in str(exc_info.value)


class TestVerifyRegion:
    """Unit tests for verify_region on individual catalog regions."""

    @pytest.mark.parametrize("name", ["R1", "R2", "R4", "R5", "Ainf-dd", "R3-max"])
    def test_catalog_region_passes(self, name):
        """Test the catalog regions certify at their thresholds."""
        certificate = verify_region(get_region(name))

        assert certificate.passed
        assert certificate.witness is None
        assert certificate.sup_bound <= certificate.threshold
        assert certificate.cells_total >= initial_cell_count(get_region(name))

    def test_r1_records_monotone_claims(self):
        """Test the factor bound is used and reported on R1."""
        certificate = verify_region(get_region("R1"))

        assert certificate.monotone_claims is not None
        assert certificate.monotone_claims.all_certified

    def test_r1_without_monotone_factors(self):
        """Test R1 still certifies with plain interval evaluation."""
        certificate = verify_region(get_region("R1"), use_monotone_factors=False)

        assert certificate.passed
        assert certificate.monotone_claims is None

    @pytest.mark.slow
    def test_r_derivative_region(self):
        """Test d/dr A stays below -0.08 on [1, 4] x [0, 1]."""
        certificate = verify_region(get_region("R3-dr"), step_scale=4.0)

        assert certificate.passed
        assert certificate.sup_bound <= -0.08

    def test_lowered_threshold_fails_with_witness(self):
        """Test A(1, 1) = 0.3748 defeats a 0.37 bound on R1."""
        spec = get_region("R1").with_overrides(threshold=0.37)

        certificate = verify_region(spec)

        assert not certificate.passed
        assert certificate.early_abort
        assert certificate.sup_bound > 0.37
        x_lo, x_hi, y_lo, y_hi = certificate.witness
        assert 0.0 <= x_lo <= x_hi <= 6.0 and 0.0 <= y_lo <= y_hi <= 1.0

    def test_budget_smaller_than_initial_mesh(self):
        """Test the whole region is returned when the mesh exceeds the budget."""
        certificate = verify_region(get_region("R2"), budget=100)

        assert not certificate.passed
        assert certificate.budget_exhausted
        assert certificate.sup_bound == math.inf
        assert certificate.witness == (0.0, 1.0, 0.0, 1.0)

    def test_threads_do_not_change_the_result(self):
        """Test one and four worker threads give the same certificate."""
        single = verify_region(get_region("R5"), threads=1)
        pooled = verify_region(get_region("R5"), threads=4)

        assert single.sup_bound == pooled.sup_bound
        assert single.cells_total == pooled.cells_total
        assert single.cells_refined == pooled.cells_refined

    def test_cell_dump(self, tmp_path):
        """Test the leaf dump follows the cell schema."""
        path = tmp_path / "cells" / "r4.csv"

        certificate = verify_region(get_region("R4"), dump_path=str(path))
        frame = pl.read_csv(path, schema=CELL_DUMP_SCHEMA)

        assert certificate.passed
        assert frame.columns == CELL_DUMP_SCHEMA.names()
        assert len(frame) >= initial_cell_count(get_region("R4"))
        assert frame["passed"].all()
        assert frame["upper"].max() == pytest.approx(certificate.sup_bound)


class TestAInfMaximum:
    """Unit tests for the maximum of A(w, inf)."""

    def test_derivative_changes_sign(self):
        """Test d/dw A(w, inf) is positive at 1, negative at 4, zero at w*."""
        assert a_inf_derivative(1.0) > 0.0
        assert a_inf_derivative(4.0) < 0.0
        assert a_inf_derivative(W_STAR) == pytest.approx(0.0, abs=1e-10)

    def test_maximum_with_certified_concavity(self):
        """Test the maximizer and maximum given a concavity certificate."""
        maximum = maximize_A_inf(_certificate())

        assert maximum.w_star == pytest.approx(W_STAR, abs=1e-9)
        assert maximum.value == pytest.approx(A_INF_MAX, abs=1e-11)
        assert maximum.certified_concave
        assert maximum.concavity_bound == -0.0029

    @pytest.mark.parametrize(
        "overrides",
        [
            {"sup_bound": 0.1, "passed": False, "witness": (1.0, 1.1, 0.0, 0.0)},
            {"sup_bound": 0.0},
        ],
    )
    def test_uncertified_concavity_raises(self, overrides):
        """Test a failing or non-strict concavity certificate raises."""
        with pytest.raises(CertificationError) as exc_info:
            maximize_A_inf(_certificate(**overrides))

        assert "not certified" in str(exc_info.value)


@pytest.mark.slow
class TestMasterCertificates:
    """Full certificate runs."""

    def test_calc(self):
        """Test A(w, q) <= 0.63 on the whole quadrant."""
        master = verify_calc()

        assert master.passed
        assert master.failing_regions == ()
        assert master.overall_bound <= 0.63
        assert master.a_inf_maximum.w_star == pytest.approx(W_STAR, abs=1e-9)

    def test_calc_half(self):
        """Test A(w, q) <= 1/2 for q <= 1.36."""
        master = verify_calc_half()

        assert master.passed
        assert master.overall_bound <= 0.5
        assert [c.region for c in master.certificates] == ["R6", "R7", "R8", "R9"]

    def test_calc_fails_at_half_threshold(self):
        """Test halving every A threshold makes the certificate fail."""
        master = verify_calc(threshold_scale=0.5)

        assert not master.passed
        assert "R3-max" in master.failing_regions
        assert "R3-dr" not in master.failing_regions
