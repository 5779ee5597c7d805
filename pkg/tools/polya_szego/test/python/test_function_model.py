"""Unit tests for the function and exponent models.

Covers validation of piecewise-linear functions, evaluation, the tent and
double-ramp constructors and the exponent variants with their derivatives.
"""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from polya_szego.function_model import (
    AffineExponent,
    ConstantExponent,
    PiecewiseLinear,
    PowerWellExponent,
    QuadraticExponent,
    Segment,
    TableExponent,
    eval_u,
    exponent_eval,
    make_double_ramp,
    make_hat,
    p_at,
    parse_exponent,
    symmetric_double_ramp,
)
from pydantic import ValidationError
from testing.strategies import exponent_documents, piecewise_linear_nodes
from utils.error_handling import DomainError, ParameterError


def _five_point_derivatives(f, x, h=1e-3):
    """First and second derivatives by fourth-order central differences."""
    values = [f(x + k * h) for k in (-2, -1, 0, 1, 2)]
    first = (values[0] - 8.0 * values[1] + 8.0 * values[3] - values[4]) / (12.0 * h)
    second = (
        -values[0] + 16.0 * values[1] - 30.0 * values[2] + 16.0 * values[3] - values[4]
    ) / (12.0 * h * h)
    return first, second


class TestPiecewiseLinear:
    """Unit tests for PiecewiseLinear validation and evaluation."""

    def setup_method(self):
        """Set up test fixtures."""
        self.u = PiecewiseLinear(
            breakpoints=(-1.0, -0.2, 0.1, 0.5, 1.0),
            values=(0.0, 0.6, 0.6, 0.2, 0.0),
        )

    def test_segments_cover_the_domain(self):
        """Test segments run left to right with matching endpoints."""
        segments = self.u.segments()

        assert len(segments) == 4
        assert segments[0].x_lo == -1.0
        assert segments[-1].x_hi == 1.0
        assert segments[1].slope == 0.0
        assert sum(seg.length for seg in segments) == pytest.approx(2.0)

    def test_eval_u_at_nodes_is_exact(self):
        """Test eval_u reproduces the node values exactly."""
        for x, v in zip(self.u.breakpoints, self.u.values):
            assert eval_u(self.u, x) == v

    def test_eval_u_outside_domain_raises(self):
        """Test evaluation outside [-1, 1] is a domain error."""
        with pytest.raises(DomainError):
            eval_u(self.u, 1.5)
        with pytest.raises(DomainError):
            eval_u(self.u, -1.0001)

    def test_segment_reconstruction_matches_eval_u(self):
        """Test segment-wise evaluation reproduces eval_u at 10^3 points."""
        xs = np.linspace(-1.0, 1.0, 1000)
        segments = self.u.segments()
        for x in xs:
            segment = next(s for s in segments if s.x_lo <= x <= s.x_hi)
            assert segment.evaluate(float(x)) == eval_u(self.u, float(x))

    def test_sample_matches_eval_u(self):
        """Test vectorized sampling agrees with scalar evaluation."""
        xs = np.linspace(-1.0, 1.0, 101)
        expected = [eval_u(self.u, float(x)) for x in xs]

        np.testing.assert_allclose(self.u.sample(xs), expected, rtol=0, atol=1e-14)

    def test_canonical_drops_collinear_nodes(self):
        """Test canonical form removes nodes where the slope is unchanged."""
        u = PiecewiseLinear(
            breakpoints=(-1.0, -0.5, 0.0, 0.5, 1.0),
            values=(0.0, 0.25, 0.5, 0.25, 0.0),
        )

        canonical = u.canonical()

        assert canonical.breakpoints == (-1.0, 0.0, 1.0)
        assert canonical.values == (0.0, 0.5, 0.0)

    def test_max_value(self):
        """Test max_value returns the largest node value."""
        assert self.u.max_value == 0.6

    @pytest.mark.parametrize(
        "breakpoints,values,message",
        [
            ((-1.0, 0.0, 0.9), (0.0, 1.0, 0.0), "start at -1 and end at 1"),
            ((-1.0, 0.2, 0.2, 1.0), (0.0, 1.0, 1.0, 0.0), "strictly increasing"),
            ((-1.0, 0.0, 1.0), (0.0, -0.1, 0.0), "nonnegative"),
            ((-1.0, 0.0, 1.0), (0.1, 1.0, 0.0), "vanish"),
            ((-1.0, 0.0, 1.0), (0.0, 1.0), "differ in length"),
            ((-1.0,), (0.0,), "at least two"),
        ],
    )
    def test_invalid_functions_fail_validation(self, breakpoints, values, message):
        """Test invalid node data is rejected with a descriptive message."""
        with pytest.raises(ValidationError) as exc_info:
            PiecewiseLinear(breakpoints=breakpoints, values=values)

        assert message in str(exc_info.value)

    def test_segment_requires_ordered_ends(self):
        """Test a segment with x_lo >= x_hi fails validation."""
        with pytest.raises(ValidationError):
            Segment(x_lo=0.5, x_hi=0.5, v_lo=0.0, v_hi=1.0)

    def test_models_are_frozen(self):
        """Test functions cannot be mutated after construction."""
        with pytest.raises(ValidationError):
            self.u.values = (0.0, 0.0)

    @given(nodes=piecewise_linear_nodes())
    @settings(max_examples=50, deadline=None)
    def test_generated_functions_are_valid(self, nodes):
        """Property test: generated node data builds valid functions."""
        breakpoints, values = nodes
        u = PiecewiseLinear(breakpoints=breakpoints, values=values)

        assert eval_u(u, -1.0) == 0.0
        assert eval_u(u, 1.0) == 0.0
        assert min(u.values) >= 0.0


class TestConstructors:
    """Unit tests for make_hat and make_double_ramp."""

    def test_hat_shape(self):
        """Test the tent of height alpha*eps on [x0 - eps, x0 + eps]."""
        u = make_hat(0.0, 1.0, 0.5)

        assert u.breakpoints == (-1.0, -0.5, 0.0, 0.5, 1.0)
        assert u.values == (0.0, 0.0, 0.5, 0.0, 0.0)

    def test_hat_apex(self):
        """Test the apex value alpha*eps sits at x0."""
        u = make_hat(0.5, 2.0, 0.25)

        assert eval_u(u, 0.5) == 0.5
        assert u.max_value == 0.5

    def test_hat_touching_the_boundary(self):
        """Test support reaching +-1 merges the coincident nodes."""
        u = make_hat(0.0, 1.0, 1.0)

        assert u.breakpoints == (-1.0, 0.0, 1.0)
        assert u.values == (0.0, 1.0, 0.0)

    @pytest.mark.parametrize(
        "x0,alpha,eps", [(0.9, 1.0, 0.2), (0.0, 0.0, 0.1), (0.0, 1.0, -0.1)]
    )
    def test_hat_invalid_parameters(self, x0, alpha, eps):
        """Test support outside [-1, 1] or nonpositive parameters raise."""
        with pytest.raises(ParameterError):
            make_hat(x0, alpha, eps)

    def test_double_ramp_plateau(self):
        """Test the ramp function has its 2 eps plateau on [-0.4, 0.4]."""
        u = make_double_ramp(-0.5, 0.5, 1.0, 1.0, 0.1)

        assert eval_u(u, 0.0) == pytest.approx(0.2)
        assert eval_u(u, -0.4) == pytest.approx(0.2)
        assert eval_u(u, 0.4) == pytest.approx(0.2)
        assert eval_u(u, -0.6) == pytest.approx(0.0, abs=1e-15)
        assert eval_u(u, -0.5) == pytest.approx(0.1)

    def test_double_ramp_slopes(self):
        """Test the ramps rise with slope 1/s and fall with slope 1/t."""
        u = make_double_ramp(-0.5, 0.5, 0.5, 2.0, 0.05)
        slopes = [seg.slope for seg in u.segments()]

        assert slopes[1] == pytest.approx(2.0)
        assert slopes[2] == pytest.approx(0.0)
        assert slopes[3] == pytest.approx(-0.5)

    def test_double_ramp_overlap_raises(self):
        """Test bands leaving (-1, 1) raise a parameter error."""
        with pytest.raises(ParameterError):
            make_double_ramp(-0.5, 0.5, 10.0, 10.0, 0.1)

    def test_double_ramp_order_raises(self):
        """Test x1 >= x2 raises a parameter error."""
        with pytest.raises(ParameterError):
            make_double_ramp(0.5, -0.5, 1.0, 1.0, 0.01)

    def test_symmetric_double_ramp_closed_form(self):
        """Test the closed-form rearrangement with s = t = 1."""
        eps = 0.1
        u_star = symmetric_double_ramp(-0.5, 0.5, 1.0, 1.0, eps)

        for x in np.linspace(-1.0, 1.0, 41):
            expected = min(2 * eps, max(eps + (1.0 - 2 * abs(x)) / 2.0, 0.0))
            assert eval_u(u_star, float(x)) == pytest.approx(expected, abs=1e-14)


class TestExponents:
    """Unit tests for the exponent variants."""

    def test_constant_values(self):
        """Test a constant exponent has q = p0 - 1 and no derivatives."""
        assert exponent_eval(ConstantExponent(p0=2.0), 0.3) == (2.0, 1.0, 0.0, 0.0)

    def test_quadratic_values(self):
        """Test p = a + b x^2 and its derivatives at x = 0.5."""
        p, q, q1, q2 = exponent_eval(QuadraticExponent(a=2.0, b=1.0), 0.5)

        assert (p, q, q1, q2) == (2.25, 1.25, 1.0, 2.0)

    def test_power_well_at_origin(self):
        """Test q(0) = a^gamma and q'(0) = 0 for the power well."""
        exponent = PowerWellExponent(a=0.5, b=1.0, gamma=1.0 / 0.37)
        _, q, q1, _ = exponent_eval(exponent, 0.0)

        assert q == pytest.approx(0.5 ** (1.0 / 0.37), rel=1e-14)
        assert q1 == 0.0

    def test_power_well_vanishing_base(self):
        """Test the a = 0 well is finite at x = 0."""
        exponent = PowerWellExponent(a=0.0, b=1.0, gamma=2.0)
        p, q, q1, q2 = exponent_eval(exponent, 0.0)

        assert (p, q, q1) == (1.0, 0.0, 0.0)
        assert math.isfinite(q2)

    def test_affine_values(self):
        """Test p = a + b x has constant q' and q'' = 0."""
        assert exponent_eval(AffineExponent(a=2.0, b=0.5), -1.0) == (
            1.5,
            0.5,
            0.5,
            0.0,
        )

    def test_exponent_eval_domain(self):
        """Test evaluation outside [-1, 1] raises."""
        with pytest.raises(DomainError):
            exponent_eval(ConstantExponent(p0=2.0), 1.01)

    def test_p_at(self):
        """Test p_at returns the first component."""
        assert p_at(QuadraticExponent(a=2.0, b=1.0), -0.5) == 2.25

    @pytest.mark.parametrize(
        "document",
        [
            {"kind": "quadratic", "a": 0.5, "b": 0.0},
            {"kind": "affine", "a": 1.2, "b": 0.5},
            {"kind": "constant", "p0": 0.9},
            {"kind": "powerwell", "a": 0.5, "b": 1.0, "gamma": 0.0},
            {"kind": "table", "breakpoints": [-1.0, 1.0], "samples": [2.0, 0.5]},
            {"kind": "table", "breakpoints": [-0.5, 1.0], "samples": [2.0, 2.0]},
            {"kind": "cubic", "a": 2.0},
        ],
    )
    def test_invalid_exponents_fail_validation(self, document):
        """Test exponents violating p >= 1 or their shape are rejected."""
        with pytest.raises(ValidationError):
            parse_exponent(document)

    def test_parse_discriminates_on_kind(self):
        """Test parse_exponent picks the variant named by kind."""
        exponent = parse_exponent({"kind": "powerwell", "a": 0.5, "b": 1, "gamma": 2})

        assert isinstance(exponent, PowerWellExponent)
        assert exponent.gamma == 2.0

    def test_even_families_are_exactly_even(self):
        """Test p(x) == p(-x) bit for bit for the even families."""
        xs = np.linspace(0.0, 1.0, 257)
        for exponent in (
            ConstantExponent(p0=3.0),
            QuadraticExponent(a=2.0, b=0.7),
            PowerWellExponent(a=0.5, b=1.0, gamma=1.0 / 0.37),
        ):
            np.testing.assert_array_equal(
                exponent.p_values(xs), exponent.p_values(-xs)
            )

    def test_affine_is_not_even(self):
        """Test a nonzero slope breaks evenness."""
        exponent = AffineExponent(a=2.0, b=0.5)

        assert p_at(exponent, 0.5) != p_at(exponent, -0.5)

    @given(
        document=exponent_documents(),
        x=st.floats(min_value=-0.9, max_value=0.9),
    )
    @settings(max_examples=100, deadline=None)
    def test_analytic_derivatives_match_finite_differences(self, document, x):
        """Property test: q' and q'' agree with finite differences of q."""
        # Wells with a near 0 have a kink at the origin when gamma <= 1.
        assume(document["kind"] != "powerwell" or document["a"] >= 0.5)
        exponent = parse_exponent(document)

        def q(t):
            return float(exponent.derivatives(np.array([t]))[1][0])

        fd_first, fd_second = _five_point_derivatives(q, x)
        _, _, q1, q2 = exponent.derivatives(np.array([x]))

        assert float(q1[0]) == pytest.approx(fd_first, rel=1e-6, abs=1e-6)
        assert float(q2[0]) == pytest.approx(fd_second, rel=1e-5, abs=1e-5)

    def test_table_exponent_reproduces_quadratic(self):
        """Test a tabulated quadratic has q' and q'' close to the exact ones."""
        xs = np.linspace(-1.0, 1.0, 41)
        table = TableExponent(
            breakpoints=tuple(xs.tolist()), samples=tuple((2.0 + xs**2).tolist())
        )

        p, q, q1, q2 = exponent_eval(table, 0.3)

        assert p == pytest.approx(2.09, abs=1e-12)
        assert q == pytest.approx(1.09, abs=1e-12)
        assert q1 == pytest.approx(0.6, abs=1e-6)
        assert q2 == pytest.approx(2.0, abs=1e-3)
