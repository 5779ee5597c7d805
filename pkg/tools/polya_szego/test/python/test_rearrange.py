"""Tests for the symmetric decreasing rearrangement."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from polya_szego.function_model import (
    PiecewiseLinear,
    eval_u,
    make_double_ramp,
    make_hat,
    symmetric_double_ramp,
)
from polya_szego.rearrange import (
    distribution_measure,
    level_frame,
    level_profile,
    same_function,
    sample_profile,
    symmetrize,
    symmetrize_grid,
)
from testing.strategies import piecewise_linear_nodes
from utils.error_handling import ParameterError

TWO_PEAKS = PiecewiseLinear(
    breakpoints=(-1.0, -0.6, -0.3, 0.0, 0.4, 0.7, 1.0),
    values=(0.0, 0.0, 0.6, 0.1, 0.5, 0.0, 0.0),
)


def _build(nodes) -> PiecewiseLinear:
    breakpoints, values = nodes
    return PiecewiseLinear(breakpoints=breakpoints, values=values)


def _layer_cake(u: PiecewiseLinear, xs: np.ndarray, slabs: int = 10_000):
    """u* from the layer-cake formula with midpoint slabs in t.

    u*(x) is the measure of {t : mu(t) > 2|x|}, which needs only the
    distribution function of u.
    """
    height = u.max_value
    dt = height / slabs
    mids = (np.arange(slabs) + 0.5) * dt
    mu = np.array([distribution_measure(u, float(t)) for t in mids])
    return np.array([dt * np.count_nonzero(mu > 2.0 * abs(x)) for x in xs])


class TestDistributionMeasure:
    """Unit tests for distribution_measure and level_profile."""

    def test_hat_measure(self):
        """Test |{u > 1/4}| = 1/2 for the tent of height 1/2."""
        assert distribution_measure(make_hat(0.0, 1.0, 0.5), 0.25) == pytest.approx(
            0.5, abs=1e-15
        )

    def test_double_ramp_measure(self):
        """Test |{u > eps}| = x2 - x1 for the double ramp."""
        u = make_double_ramp(-0.5, 0.5, 1.0, 1.0, 0.1)

        assert distribution_measure(u, 0.1) == pytest.approx(1.0, abs=1e-15)

    def test_measure_above_maximum_is_zero(self):
        """Test nothing lies above the maximum."""
        assert distribution_measure(TWO_PEAKS, 0.6) == 0.0

    def test_profile_of_hat(self):
        """Test levels, limits and band slope of a tent."""
        profile = level_profile(make_hat(0.0, 1.0, 0.5))

        assert profile.levels == (0.0, 0.5)
        assert profile.mu_above == pytest.approx((1.0, 0.0))
        assert profile.mu_at_least == pytest.approx((1.0, 0.0))
        assert profile.band_slopes == pytest.approx((-2.0,))

    def test_profile_records_plateau_jump(self):
        """Test a plateau at height 2 eps shows up as a jump of mu."""
        profile = level_profile(make_double_ramp(-0.5, 0.5, 1.0, 1.0, 0.1))

        assert profile.mu_above[-1] == 0.0
        assert profile.mu_at_least[-1] == pytest.approx(0.8)

    @given(
        nodes=piecewise_linear_nodes(),
        fraction=st.floats(min_value=0.0, max_value=1.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_profile_measure_matches_direct_measure(self, nodes, fraction):
        """Property test: the profile interpolates mu exactly inside bands."""
        u = _build(nodes)
        t = fraction * u.max_value

        assert level_profile(u).measure(t) == pytest.approx(
            distribution_measure(u, t), abs=1e-12
        )


class TestSymmetrize:
    """Unit tests for symmetrize."""

    def test_centered_hat_is_fixed(self):
        """Test a tent centered at the origin is its own rearrangement."""
        u = make_hat(0.0, 1.0, 0.5)

        assert same_function(symmetrize(u), u)

    def test_shifted_hat_moves_to_origin(self):
        """Test an off-center tent is recentred."""
        assert same_function(symmetrize(make_hat(0.3, 2.0, 0.25)), make_hat(0, 2, 0.25))

    @pytest.mark.parametrize(
        "x1,x2,s,t,eps",
        [
            (-0.5, 0.5, 1.0, 2.0, 0.05),
            (-0.5, 0.5, 1.0, 1.0, 0.1),
            (-0.2, 0.7, 0.3, 0.5, 0.2),
        ],
    )
    def test_double_ramp_closed_form(self, x1, x2, s, t, eps):
        """Test the rearranged double ramp matches its closed form."""
        u = make_double_ramp(x1, x2, s, t, eps)

        assert same_function(symmetrize(u), symmetric_double_ramp(x1, x2, s, t, eps))

    def test_result_is_canonical(self):
        """Test the returned function has no collinear interior nodes."""
        u_star = symmetrize(TWO_PEAKS)

        assert u_star.canonical() == u_star

    def test_same_function_detects_differences(self):
        """Test same_function rejects functions with different apexes."""
        assert not same_function(make_hat(0.0, 1.0, 0.5), make_hat(0.0, 1.0, 0.4))

    @given(nodes=piecewise_linear_nodes())
    @settings(max_examples=100, deadline=None)
    def test_equimeasurable(self, nodes):
        """Property test: u and u* have the same distribution function."""
        u = _build(nodes)
        u_star = symmetrize(u)
        for t in (*u.values, *(0.5 * (a + b) for a, b in zip(u.values, u.values[1:]))):
            assert distribution_measure(u_star, t) == pytest.approx(
                distribution_measure(u, t), abs=1e-10
            )

    @given(nodes=piecewise_linear_nodes())
    @settings(max_examples=100, deadline=None)
    def test_even_and_nonincreasing(self, nodes):
        """Property test: u* is exactly even and nonincreasing on [0, 1]."""
        u_star = symmetrize(_build(nodes))
        xs, vs = u_star.breakpoints, u_star.values

        assert xs == tuple(-x for x in reversed(xs))
        assert vs == tuple(reversed(vs))
        right = [v for x, v in zip(xs, vs) if x >= 0.0]
        assert all(a >= b for a, b in zip(right, right[1:]))

    @given(nodes=piecewise_linear_nodes())
    @settings(max_examples=100, deadline=None)
    def test_maximum_preserved(self, nodes):
        """Property test: the maximum is unchanged and attained at 0."""
        u = _build(nodes)
        u_star = symmetrize(u)

        assert u_star.max_value == u.max_value
        assert eval_u(u_star, 0.0) == pytest.approx(u.max_value, rel=1e-15)

    @given(nodes=piecewise_linear_nodes())
    @settings(max_examples=100, deadline=None)
    def test_idempotent(self, nodes):
        """Property test: rearranging twice changes nothing."""
        u_star = symmetrize(_build(nodes))

        assert same_function(symmetrize(u_star), u_star)

    @given(nodes=piecewise_linear_nodes(max_interior=5))
    @settings(max_examples=10, deadline=None)
    def test_layer_cake_oracle(self, nodes):
        """Property test: u* agrees with the layer-cake reconstruction."""
        u = _build(nodes)
        xs = np.linspace(-1.0, 1.0, 201)

        np.testing.assert_allclose(
            symmetrize(u).sample(xs), _layer_cake(u, xs), rtol=0, atol=1e-3
        )


class TestSymmetrizeGrid:
    """Unit tests for the discrete rearrangement of cell values."""

    def test_odd_count_example(self):
        """Test the largest value moves to the middle cell."""
        assert symmetrize_grid([0.0, 3.0, 1.0, 2.0, 0.0], 0.4) == [
            0.0,
            1.0,
            3.0,
            2.0,
            0.0,
        ]

    def test_even_count_fills_right_middle_first(self):
        """Test ties in distance are broken towards the right cell."""
        assert symmetrize_grid([1.0, 2.0, 3.0, 4.0], 0.5) == [1.0, 3.0, 4.0, 2.0]

    def test_single_cell(self):
        """Test a single cell is returned unchanged."""
        assert symmetrize_grid([0.7], 2.0) == [0.7]

    def test_empty_samples_raise(self):
        """Test an empty grid is rejected."""
        with pytest.raises(ParameterError):
            symmetrize_grid([], 0.1)

    def test_nonpositive_width_raises(self):
        """Test a nonpositive cell width is rejected."""
        with pytest.raises(ParameterError):
            symmetrize_grid([1.0, 2.0], 0.0)

    @given(
        samples=st.lists(
            st.floats(min_value=0.0, max_value=10.0), min_size=1, max_size=40
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_multiset_preserved(self, samples):
        """Property test: the arrangement permutes the samples."""
        assert sorted(symmetrize_grid(samples, 0.1)) == sorted(samples)

    @pytest.mark.parametrize(
        "u",
        [make_double_ramp(-0.5, 0.5, 1.0, 2.0, 0.05), TWO_PEAKS],
        ids=["double-ramp", "two-peaks"],
    )
    def test_grid_converges_to_symmetrize(self, u):
        """Test the discrete arrangement approaches u* under refinement."""
        lipschitz = max(abs(seg.slope) for seg in u.segments())
        u_star = symmetrize(u)
        errors = []
        for n in (32, 64, 128):
            h = 2.0 / n
            centers = -1.0 + (np.arange(n) + 0.5) * h
            arranged = symmetrize_grid(u.sample(centers).tolist(), h)
            error = float(np.max(np.abs(np.asarray(arranged) - u_star.sample(centers))))
            assert error <= 4.0 * lipschitz * h
            errors.append(error)

        assert errors[-1] <= errors[0]


class TestProfileFrames:
    """Unit tests for the sampled and level frames."""

    def test_sample_profile(self):
        """Test u and u* are sampled on a uniform grid of [-1, 1]."""
        frame = sample_profile(TWO_PEAKS, 41)
        u_star = symmetrize(TWO_PEAKS)

        assert frame.columns == ["x", "u", "u_star"]
        assert frame.height == 41
        xs = frame["x"].to_numpy()
        assert xs[0] == -1.0 and xs[-1] == 1.0
        np.testing.assert_allclose(np.diff(xs), 0.05)
        np.testing.assert_allclose(frame["u"].to_numpy(), TWO_PEAKS.sample(xs))
        np.testing.assert_allclose(frame["u_star"].to_numpy(), u_star.sample(xs))
        assert frame["u_star"].max() == pytest.approx(0.6)

    def test_sample_profile_needs_two_points(self):
        """Test fewer than two samples is a parameter error."""
        with pytest.raises(ParameterError) as exc_info:
            sample_profile(TWO_PEAKS, 1)

        assert "2 samples" in str(exc_info.value)

    def test_level_frame(self):
        """Test the level frame matches the profile arrays."""
        profile = level_profile(TWO_PEAKS)
        frame = level_frame(profile)

        assert frame.columns == ["level", "mu_above", "mu_at_least"]
        assert tuple(frame["level"].to_list()) == profile.levels
        assert tuple(frame["mu_at_least"].to_list()) == profile.mu_at_least
