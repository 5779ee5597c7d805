"""Tests for the functionals J and I and the kernels K, M and Kcal."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from polya_szego.function_model import (
    ConstantExponent,
    PiecewiseLinear,
    PowerWellExponent,
    QuadraticExponent,
    make_double_ramp,
    make_hat,
)
from polya_szego.functionals import (
    eval_I,
    eval_J,
    eval_K,
    eval_Kcal,
    eval_M,
    eval_M_ds,
    functional_pair,
    integrate_functional,
    kernel_partials,
    kernel_values,
    layered_I,
)
from polya_szego.quadrature import QuadratureConfig
from polya_szego.rearrange import symmetrize
from testing.strategies import piecewise_linear_nodes
from utils.error_handling import DomainError, NumericError

QUADRATIC = QuadraticExponent(a=2.0, b=1.0)
POWER_WELL = PowerWellExponent(a=0.5, b=1.0, gamma=1.0 / 0.37)


def _riemann(u: PiecewiseLinear, p, which: str, n: int = 200_000) -> float:
    """Midpoint-rule reference value, segment by segment."""
    total = 0.0
    for segment in u.segments():
        h = segment.length / n
        xs = segment.x_lo + (np.arange(n) + 0.5) * h
        p_values = p.p_values(xs)
        if which == "J":
            density = np.abs(segment.slope) ** p_values
        else:
            density = (1.0 + segment.slope**2) ** (0.5 * p_values)
        total += float(np.sum(density)) * h
    return total


def _mp_kernel(s, x):
    """K(s, x) for p = 2 + x^2 in multiprecision."""
    return s * (1 + s**-2) ** ((2 + x**2) / 2)


class TestFunctionals:
    """Unit tests for eval_J, eval_I and integrate_functional."""

    def setup_method(self):
        """Set up test fixtures."""
        self.hat = make_hat(0.0, 1.0, 0.5)
        self.two = ConstantExponent(p0=2.0)

    def test_constant_exponent_closed_form(self):
        """Test J = 1 and I = 3 for the unit-slope tent with p = 2."""
        assert eval_J(self.hat, self.two) == pytest.approx(1.0, rel=1e-15)
        assert eval_I(self.hat, self.two) == pytest.approx(3.0, rel=1e-15)

    def test_zero_slope_measure(self):
        """Test the flat part of the tent is reported."""
        value = integrate_functional(self.hat, self.two, "I")

        assert value.zero_slope_measure == pytest.approx(1.0)
        assert value.est_error == 0.0

    @pytest.mark.parametrize("which", ["J", "I"])
    @pytest.mark.parametrize(
        "u",
        [make_hat(0.2, 3.0, 0.4), make_double_ramp(-0.5, 0.5, 0.5, 2.0, 0.1)],
        ids=["hat", "double-ramp"],
    )
    def test_matches_riemann_sum(self, u, which):
        """Test quadrature against a fine midpoint rule."""
        expected = _riemann(u, QUADRATIC, which)

        assert integrate_functional(u, QUADRATIC, which).value == pytest.approx(
            expected, rel=1e-8
        )

    def test_constant_quadrature_agrees_with_closed_form(self):
        """Test the quadrature path and the closed form agree for p = 3."""
        u = make_double_ramp(-0.3, 0.6, 0.4, 0.7, 0.2)
        closed = eval_I(u, ConstantExponent(p0=3.0))
        quadrature = eval_I(u, QuadraticExponent(a=3.0, b=0.0))

        assert quadrature == pytest.approx(closed, rel=1e-12)

    def test_nonconvergence_carries_partial_value(self):
        """Test a quadrature failure reports the sum of finished pieces."""
        steep = make_hat(0.0, 10.0, 0.5)

        with pytest.raises(NumericError) as exc_info:
            integrate_functional(
                steep,
                QuadraticExponent(a=2.0, b=20.0),
                "J",
                QuadratureConfig(max_depth=1),
            )

        assert exc_info.value.partial_value > 0.0
        assert "J quadrature failed" in str(exc_info.value)

    def test_functional_pair(self):
        """Test the pair holds the value of u then of u*."""
        u = make_hat(0.4, 1.0, 0.3)
        original, rearranged = functional_pair(u, QUADRATIC, "J")

        assert original.value == pytest.approx(eval_J(u, QUADRATIC))
        assert rearranged.value == pytest.approx(eval_J(symmetrize(u), QUADRATIC))

    @given(
        nodes=piecewise_linear_nodes(max_interior=6),
        p0=st.floats(min_value=1.0, max_value=4.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_constant_exponent_does_not_increase(self, nodes, p0):
        """Property test: rearrangement never increases J or I for constant p."""
        u = PiecewiseLinear(breakpoints=nodes[0], values=nodes[1])
        p = ConstantExponent(p0=p0)
        u_star = symmetrize(u)

        for which in ("J", "I"):
            before = integrate_functional(u, p, which).value
            after = integrate_functional(u_star, p, which).value
            assert after <= before * (1.0 + 1e-9) + 1e-12


class TestKernels:
    """Unit tests for K, M, Kcal and their derivatives."""

    @pytest.mark.parametrize("s", [1e-3, 0.3, 1.0, 7.5, 1e4, 1e8])
    @pytest.mark.parametrize("x", [-0.8, 0.0, 0.5])
    def test_kernel_values_against_mpmath(self, s, x):
        """Test K and M against 50-digit arithmetic."""
        with mpmath.workdps(50):
            k = _mp_kernel(mpmath.mpf(s), mpmath.mpf(x))
            m = k - s

        assert eval_K(s, x, QUADRATIC) == pytest.approx(float(k), rel=1e-13)
        assert eval_M(s, x, QUADRATIC) == pytest.approx(float(m), rel=1e-12)

    def test_kernel_values_vectorized(self):
        """Test the array form agrees with the scalar form."""
        s = np.array([0.2, 1.0, 3.0])
        x = np.array([-0.5, 0.1, 0.9])
        expected = [eval_K(float(a), float(b), QUADRATIC) for a, b in zip(s, x)]

        np.testing.assert_allclose(
            kernel_values(s, QUADRATIC.p_values(x)), expected, rtol=1e-14
        )

    @pytest.mark.parametrize("s", [0.0, -1.0, 1e-320])
    def test_kernel_rejects_nonpositive_slope(self, s):
        """Test s <= 0 and subnormal s are domain errors."""
        with pytest.raises(DomainError):
            eval_K(s, 0.0, QUADRATIC)

    def test_kernel_rejects_x_outside_domain(self):
        """Test x outside [-1, 1] is a domain error."""
        with pytest.raises(DomainError):
            eval_K(1.0, 1.5, QUADRATIC)

    @pytest.mark.parametrize("s", [0.05, 0.7, 3.0, 200.0])
    def test_m_is_decreasing(self, s):
        """Test dM/ds is negative and matches numerical differentiation."""
        with mpmath.workdps(40):
            expected = mpmath.diff(
                lambda t: _mp_kernel(t, mpmath.mpf(0.3)) - t, mpmath.mpf(s)
            )

        slope = eval_M_ds(s, 0.3, QUADRATIC)

        assert slope < 0.0
        assert slope == pytest.approx(float(expected), rel=1e-10, abs=1e-14)

    @given(
        s=st.floats(min_value=1e-3, max_value=1e3),
        x1=st.floats(min_value=0.0, max_value=1.0),
        x2=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_m_increases_away_from_centre(self, s, x1, x2):
        """Property test: M(s, .) grows with |x| when p does."""
        near, far = sorted((x1, x2))

        assert eval_M(s, near, POWER_WELL) <= eval_M(s, far, POWER_WELL) * (
            1.0 + 1e-12
        )
        assert eval_M(s, -far, POWER_WELL) == eval_M(s, far, POWER_WELL)

    @given(
        s=st.floats(min_value=1e-3, max_value=1e3),
        ratio=st.floats(min_value=1e-6, max_value=10.0),
        x=st.floats(min_value=-1.0, max_value=1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_m_decreases_in_s(self, s, ratio, x):
        """Property test: M(., x) is nonincreasing in the slope."""
        larger = s * (1.0 + ratio)

        assert eval_M(larger, x, POWER_WELL) <= eval_M(s, x, POWER_WELL) * (
            1.0 + 1e-12
        )

    @pytest.mark.parametrize(
        "c,d,y", [(0.5, 0.0, 0.2), (2.0, 3.0, -0.7), (1e-3, 10.0, 1.0)]
    )
    def test_kcal_identity(self, c, d, y):
        """Test Kcal(c, d, y) = sqrt(1 + d^2) K(c / sqrt(1 + d^2), y)."""
        root = math.sqrt(1.0 + d * d)

        assert eval_Kcal(c, d, y, QUADRATIC) == pytest.approx(
            root * eval_K(c / root, y, QUADRATIC), rel=1e-12
        )

    @pytest.mark.parametrize("s,x", [(0.4, 0.3), (1.0, -0.6), (2.5, 0.9)])
    def test_partials_against_mpmath(self, s, x):
        """Test analytic partials against multiprecision differentiation."""
        partials = kernel_partials(s, x, QUADRATIC)
        with mpmath.workdps(40):
            point = (mpmath.mpf(s), mpmath.mpf(x))
            expected = {"K": float(_mp_kernel(*point))}
            expected.update(
                (name, float(mpmath.diff(_mp_kernel, point, order)))
                for name, order in {
                    "K_s": (1, 0),
                    "K_x": (0, 1),
                    "K_ss": (2, 0),
                    "K_sx": (1, 1),
                    "K_xx": (0, 2),
                }.items()
            )

        for name, value in expected.items():
            assert getattr(partials, name) == pytest.approx(value, rel=1e-9, abs=1e-12)


class TestLayeredI:
    """Unit tests for the level-band evaluation of I."""

    @given(nodes=piecewise_linear_nodes(max_interior=5))
    @settings(max_examples=25, deadline=None)
    def test_matches_direct_evaluation_for_even_exponent(self, nodes):
        """Property test: the band sums equal I(u) - Z and I(u*) - Z."""
        u = PiecewiseLinear(breakpoints=nodes[0], values=nodes[1])
        layered = layered_I(u, QUADRATIC)
        direct = integrate_functional(u, QUADRATIC, "I")
        rearranged = integrate_functional(symmetrize(u), QUADRATIC, "I")

        assert layered.zero_slope_measure == pytest.approx(direct.zero_slope_measure)
        assert layered.I_minus_Z == pytest.approx(
            direct.value - direct.zero_slope_measure, rel=1e-8, abs=1e-10
        )
        assert layered.I_star_minus_Z == pytest.approx(
            rearranged.value - layered.zero_slope_measure, rel=1e-8, abs=1e-10
        )

    def test_band_count(self):
        """Test a tent has one band and a double ramp has one band."""
        assert layered_I(make_hat(0.0, 1.0, 0.5), QUADRATIC).bands == 1
        assert layered_I(make_double_ramp(-0.5, 0.5, 1, 1, 0.1), QUADRATIC).bands == 1

    def test_symmetric_tent_has_zero_slack(self):
        """Test an even tent is its own rearrangement band by band."""
        layered = layered_I(make_hat(0.0, 1.0, 0.5), QUADRATIC)

        assert layered.min_pointwise_slack == pytest.approx(0.0, abs=1e-12)
        assert layered.I_minus_Z == pytest.approx(layered.I_star_minus_Z, rel=1e-12)
