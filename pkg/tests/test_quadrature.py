"""Tests for adaptive Gauss-Legendre quadrature."""
import math

import numpy as np
import pytest

from src.errors import AccuracyError
from src.quadrature import (
    gauss_legendre,
    integrate_segment,
    integrate_to_singular_end,
    integrate_unit,
)


class TestGaussLegendre:
    def test_weights_sum_to_interval_length(self):
        _, weights = gauss_legendre(32)
        assert weights.sum() == pytest.approx(2.0, abs=1e-14)

    def test_nodes_are_read_only(self):
        nodes, _ = gauss_legendre(16)
        with pytest.raises(ValueError):
            nodes[0] = 0.0


class TestIntegrateUnit:
    """Test the adaptive driver on a real parameter interval."""

    def test_polynomial_is_exact(self):
        res = integrate_unit(lambda s: 5 * s ** 4 + 1j * s)
        assert res.value == pytest.approx(1.0 + 0.5j, abs=1e-14)

    def test_oscillatory_integrand(self):
        res = integrate_unit(lambda s: np.cos(40 * s), 0.0, math.pi / 2)
        assert res.value.real == pytest.approx(math.sin(20 * math.pi) / 40, abs=1e-11)

    def test_empty_interval(self):
        res = integrate_unit(np.exp, 0.3, 0.3)
        assert res.value == 0
        assert res.panels == 0

    def test_accuracy_error_carries_estimate(self):
        with pytest.raises(AccuracyError) as exc_info:
            integrate_unit(lambda s: np.abs(s - 0.3) ** -0.9, rtol=1e-15, max_depth=2)
        assert exc_info.value.estimate > 0


class TestComplexPaths:
    """Test segment and singular-endpoint integration."""

    def test_segment_in_complex_plane(self):
        a, b = 0.2 + 0.1j, 1.5 - 0.7j
        res = integrate_segment(np.exp, a, b)
        assert abs(res.value - (np.exp(b) - np.exp(a))) < 1e-13

    def test_segment_additivity(self):
        f = lambda z: 1.0 / (z + 2.0)
        a, b = 0.0, 1.0 + 1.0j
        mid = 0.5 * (a + b)
        whole = integrate_segment(f, a, b).value
        parts = integrate_segment(f, a, mid).value + integrate_segment(f, mid, b).value
        assert abs(whole - parts) < 1e-12

    def test_inverse_square_root_singularity(self):
        """int_0^1 (1 - x)^(-1/2) dx = 2."""
        res = integrate_to_singular_end(lambda x: (1.0 - x) ** -0.5, 0.0, 1.0, -0.5)
        assert res.value.real == pytest.approx(2.0, abs=1e-12)

    def test_singular_end_on_complex_segment(self):
        """int_a^b (b - z)^(1/3) dz = 3/4 (b - a)^(4/3)."""
        a, b = 0.0, 1.0 + 1.0j
        res = integrate_to_singular_end(lambda z: (b - z) ** (1.0 / 3.0), a, b, 1.0 / 3.0)
        assert abs(res.value - 0.75 * (b - a) ** (4.0 / 3.0)) < 1e-12

    def test_exponent_at_minus_one_rejected(self):
        with pytest.raises(ValueError):
            integrate_to_singular_end(lambda x: 1.0 / (1.0 - x), 0.0, 1.0, -1.0)
