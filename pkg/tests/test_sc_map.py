"""Tests for the annulus Schwarz-Christoffel map."""
import math
from dataclasses import replace

import numpy as np
import pytest

from src.domain import INNER, OUTER
from src.elliptic import OMEGA1
from src.errors import PathError, PrevertexProximityError
from src.sc_map import (
    SchwarzChristoffelMap,
    boundary_polyline,
    boundary_samples,
    canonicalize,
    compute_c,
    distance_to_polyline,
    eval_map,
    fix_frame,
    grid_image,
    locate_boundary_point,
    make_state,
    map_derivative,
    refresh_c2,
    second_derivative_at_tip,
    shift_representative,
    transform_frame,
    vertex_residuals,
)

INTERIOR_POINTS = [0.4 + 0.3j, 1.7 + 0.8j, 3.0 + 0.5j, 4.4 + 0.2j, 5.9 + 0.9j]


class TestIntegrand:
    """Test the theta and sigma forms of the integrand."""

    def test_c_is_cached_on_the_state(self, rect_solution):
        assert rect_solution.state.c == pytest.approx(
            compute_c(rect_solution.state, rect_solution.spec), abs=1e-15
        )

    def test_sigma_and_theta_forms_differ_by_a_constant(self, rect_solution):
        fmap = SchwarzChristoffelMap(rect_solution.state, rect_solution.spec)
        xi = np.array(INTERIOR_POINTS)
        ratio = np.exp(fmap.log_integrand_sigma(xi) - fmap.log_integrand(xi))
        expected = np.exp(fmap.log_offset)
        assert np.all(np.abs(ratio - expected) <= 1e-10 * abs(expected))

    def test_derivative_is_periodic(self, rect_solution):
        xi = np.array(INTERIOR_POINTS)
        here = map_derivative(xi, rect_solution.state, rect_solution.spec)
        there = map_derivative(xi + OMEGA1, rect_solution.state, rect_solution.spec)
        assert np.all(np.abs(here - there) <= 1e-10 * np.abs(here))

    def test_evaluation_at_a_prevertex_rejected(self, rect_solution):
        fmap = SchwarzChristoffelMap(rect_solution.state, rect_solution.spec)
        with pytest.raises(PrevertexProximityError):
            fmap.log_integrand(rect_solution.state.z_outer[0])

    def test_make_state_checks_counts(self, rect_solution):
        with pytest.raises(ValueError):
            make_state(rect_solution.spec, [0.1, 0.2], [0.0, math.pi], 2j)


class TestEvalMap:
    """Test images of prevertices and boundary points."""

    def test_vertex_images(self, rect_solution):
        residuals = vertex_residuals(rect_solution.state, rect_solution.spec)
        assert residuals.max_vertex_error <= 1e-6
        assert residuals.max_side_error <= 1e-6

    def test_slit_end_image(self, rect_solution):
        z = rect_solution.state.z_of(rect_solution.spec, "a2")
        assert abs(eval_map(z, rect_solution.state, rect_solution.spec) - 0.5) <= 1e-6

    def test_path_additivity(self, rect_solution):
        fmap = SchwarzChristoffelMap(rect_solution.state, rect_solution.spec)
        a, b = 0.3 + 0.2j, 2.5 + 0.6j
        mid = 0.5 * (a + b)
        whole = fmap.segment(a, b).value
        parts = fmap.segment(a, mid).value + fmap.segment(mid, b).value
        assert abs(whole - parts) <= 1e-12 * abs(whole)

    def test_boundary_lines_map_onto_polylines(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        outer = boundary_polyline(spec, OUTER)
        inner = boundary_polyline(spec, INNER)
        for sample in boundary_samples(state, spec, n=8):
            target = outer if abs(sample.z.imag) < 1e-12 else inner
            assert distance_to_polyline(sample.w, target) <= 1e-6

    def test_path_too_close_to_prevertex_rejected(self, rect_solution):
        fmap = SchwarzChristoffelMap(rect_solution.state, rect_solution.spec)
        x = rect_solution.state.x_outer[1]
        with pytest.raises(PathError):
            fmap.segment(x - 0.1 + 1e-4j, x + 0.1 + 1e-4j)


class TestFrameAndRepresentatives:
    """Test operations that change the parametrization but not the map."""

    def test_transform_frame(self, rect_solution):
        state, spec = transform_frame(rect_solution.state, rect_solution.spec, 3.5, 3.5 + 2j)
        assert spec.vertex("o1").w == pytest.approx(7 + 3.75j)
        z = state.z_of(spec, "o2")
        assert abs(eval_map(z, state, spec) - spec.vertex("o2").w) <= 1e-5

    def test_zero_scale_rejected(self, rect_solution):
        with pytest.raises(ValueError):
            transform_frame(rect_solution.state, rect_solution.spec, 0, 1)

    def test_shift_representative_keeps_derivative(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        shifted = shift_representative(state, spec, "o3", 1)
        assert shifted.x_outer[2] == pytest.approx(state.x_outer[2] - OMEGA1)
        assert shifted.c != pytest.approx(state.c)
        xi = np.array(INTERIOR_POINTS)
        before = map_derivative(xi, state, spec)
        after = map_derivative(xi, shifted, spec)
        assert np.all(np.abs(before - after) <= 1e-10 * np.abs(before))

    def test_shift_inner_representative_keeps_derivative(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        shifted = shift_representative(state, spec, "a1", -1)
        xi = np.array(INTERIOR_POINTS)
        before = map_derivative(xi, state, spec)
        after = map_derivative(xi, shifted, spec)
        assert np.all(np.abs(before - after) <= 1e-10 * np.abs(before))

    def test_canonicalize(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        moved = shift_representative(state, spec, "o1", -2)
        back = canonicalize(moved, spec)
        assert np.all((back.x_outer >= 0) & (back.x_outer < OMEGA1))
        assert back.C1 == pytest.approx(state.C1, rel=1e-12)
        assert back.c == pytest.approx(state.c, rel=1e-12)

    def test_fix_frame_recovers_constants(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        fixed = fix_frame(replace(state, C1=1.0, C2=0.0), spec)
        assert abs(fixed.C1 - state.C1) <= 1e-7 * abs(state.C1)
        assert abs(fixed.C2 - state.C2) <= 1e-7

    def test_fix_frame_anchor_choice(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        other = fix_frame(state, spec, anchors=("o3", "a2"))
        for z in INTERIOR_POINTS:
            assert abs(eval_map(z, other, spec) - eval_map(z, state, spec)) <= 1e-6

    def test_refresh_c2_on_exact_state(self, rect_solution):
        _, delta = refresh_c2(rect_solution.state, rect_solution.spec)
        assert abs(delta) <= 1e-6

    def test_locate_boundary_point_by_symmetry(self, rect_solution):
        """The midpoint of the top side is the image of x = pi/2."""
        x, edge = locate_boundary_point(rect_solution.state, rect_solution.spec, OUTER, 0.5j)
        assert edge == 0
        assert x == pytest.approx(math.pi / 2, abs=1e-8)

    def test_locate_point_off_the_boundary_rejected(self, rect_solution):
        with pytest.raises(PathError):
            locate_boundary_point(rect_solution.state, rect_solution.spec, OUTER, 0.2 + 0.1j)


class TestSecondDerivative:
    """Test F'' at slit tips."""

    def test_matches_finite_difference_of_derivative(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        z = state.z_of(spec, "a2")
        h = 1e-4
        fd = (map_derivative(z + h, state, spec) - map_derivative(z - h, state, spec)) / (2 * h)
        value = second_derivative_at_tip("a2", state, spec)
        assert abs(value - fd) <= 1e-5 * abs(value)

    def test_linear_in_c1(self, rect_solution):
        state, spec = rect_solution.state, rect_solution.spec
        doubled = replace(state, C1=2 * state.C1)
        assert second_derivative_at_tip("a1", doubled, spec) == pytest.approx(
            2 * second_derivative_at_tip("a1", state, spec), rel=1e-14
        )

    def test_corner_is_not_a_tip(self, rect_solution):
        with pytest.raises(ValueError):
            second_derivative_at_tip("o1", rect_solution.state, rect_solution.spec)


class TestGridImage:
    """Test images of the polar grid."""

    def test_single_circle_and_ray(self, rect_solution):
        grid = grid_image(rect_solution.state, rect_solution.spec, 1, 1)
        assert len(grid.polylines) == 2
        assert grid.radii[0] > rect_solution.state.lattice.annulus_radius

    def test_images_stay_inside_the_rectangle(self, rect_solution):
        grid = grid_image(rect_solution.state, rect_solution.spec, 2, 4, gap_fraction=0.05)
        for curve in grid.polylines:
            finite = curve[np.isfinite(curve.real)]
            assert np.all(np.abs(finite.real) <= 1.0 + 1e-6)
            assert np.all(np.abs(finite.imag) <= 0.5 + 1e-6)

    def test_counts_must_be_positive(self, rect_solution):
        with pytest.raises(ValueError):
            grid_image(rect_solution.state, rect_solution.spec, 0, 4)
