"""Tests for theta, Weierstrass and Legendre elliptic functions."""
import math

import numpy as np
import pytest
from scipy import special

from src.elliptic import (
    OMEGA1,
    EllipticModulus,
    PeriodLattice,
    dlog_sigma_domega1,
    dlog_sigma_domega2,
    ellint_F,
    ellint_K,
    ellint_Kprime,
    half_period_constants,
    jacobi_sn,
    log_sigma,
    module_from_nome,
    theta1,
    theta1_log_derivative,
    theta_nulls,
    weier_p,
    weier_zeta,
)
from src.errors import BranchError, DomainError, InvalidLatticeError, PoleError
from src.quadrature import integrate_unit


def _lattice_points(lattice, size=400):
    m = np.arange(-size, size + 1)
    grid = m[:, None] * lattice.omega1 + m[None, :] * lattice.omega2
    points = grid.ravel()
    return points[points != 0]


class TestTheta:
    """Test the theta1 series and its derivatives."""

    def test_derivative_matches_finite_difference(self):
        """theta1' at v = 0.2, q = 0.04 agrees with a central difference."""
        h = 1e-5
        fd = (theta1(0.2 + h, 0.04) - theta1(0.2 - h, 0.04)) / (2 * h)
        assert theta1(0.2, 0.04, 1) == pytest.approx(fd, rel=1e-8)

    def test_second_derivative_matches_finite_difference(self):
        h = 1e-5
        fd = (theta1(0.7 + 0.1j + h, 0.1, 1) - theta1(0.7 + 0.1j - h, 0.1, 1)) / (2 * h)
        assert abs(theta1(0.7 + 0.1j, 0.1, 2) - fd) <= 1e-8 * abs(fd)

    def test_quasi_periodicity(self):
        """theta1(v + pi*tau) = -q^-1 e^(-2iv) theta1(v)."""
        q = 0.2
        tau = -1j * math.log(q) / math.pi
        v = 0.3 + 0.1j
        shifted = theta1(v + math.pi * tau, q)
        expected = -theta1(v, q) * np.exp(-2j * v) / q
        assert abs(shifted - expected) <= 1e-12 * abs(expected)

    def test_log_derivative_is_ratio(self):
        v = 0.4 + 0.2j
        ratio = theta1(v, 0.1, 1) / theta1(v, 0.1)
        assert abs(theta1_log_derivative(v, 0.1) - ratio) <= 1e-13 * abs(ratio)

    def test_jacobi_identity(self):
        """theta3^4 = theta2^4 + theta4^4."""
        th2, th3, th4 = theta_nulls(0.3)
        assert abs(th3 ** 4 - th2 ** 4 - th4 ** 4) < 1e-12

    def test_vectorized_evaluation(self):
        v = np.array([0.1, 0.2 + 0.1j, 1.5])
        values = theta1(v, 0.05)
        assert values.shape == (3,)
        assert values[1] == pytest.approx(theta1(0.2 + 0.1j, 0.05), rel=1e-14)

    def test_invalid_nome(self):
        with pytest.raises(InvalidLatticeError):
            theta1(0.1, 1.2)

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            theta1(0.1, 0.1, order=4)


class TestPeriodLattice:
    """Test lattice constants."""

    def test_legendre_relation(self, lattice):
        assert abs(lattice.eta1 * lattice.omega2 - lattice.eta2 * lattice.omega1 - 2j * math.pi) < 1e-12

    def test_modulus_and_capacity(self, lattice):
        assert lattice.modulus == pytest.approx(0.17015854326499394, abs=1e-15)
        assert lattice.capacity * lattice.modulus == pytest.approx(1.0, abs=1e-15)

    def test_from_modulus(self):
        lat = PeriodLattice.from_modulus(0.25)
        assert lat.omega2 == pytest.approx(1j * math.pi, abs=1e-15)
        assert lat.omega1 == OMEGA1

    def test_half_period_values_sum_to_zero(self, lattice):
        assert abs(lattice.e1 + lattice.e2 + lattice.e3) < 1e-10

    def test_g2_from_half_period_values(self, lattice):
        """g2 = 2 (e1^2 + e2^2 + e3^2), with e_i from p and g2 from theta constants."""
        expected = 2.0 * (lattice.e1 ** 2 + lattice.e2 ** 2 + lattice.e3 ** 2)
        assert abs(lattice.g2 - expected) <= 1e-10 * abs(expected)

    def test_g2_against_eisenstein_sum(self, lattice):
        """g2 = 60 * sum' w^-4 over a box that is roughly square in the plane."""
        m = np.arange(-400, 401)
        n_max = int(math.ceil(400 * lattice.omega1 / lattice.omega2.imag))
        n = np.arange(-n_max, n_max + 1)
        w = (m[:, None] * lattice.omega1 + n[None, :] * lattice.omega2).ravel()
        w = w[w != 0]
        assert abs(lattice.g2 - 60.0 * np.sum(w ** -4.0)) <= 1e-6

    def test_half_period_constants(self, lattice):
        eta1, eta2, g2, e1, e2, e3 = half_period_constants(lattice)
        assert (eta1, eta2, g2) == (lattice.eta1, lattice.eta2, lattice.g2)
        assert (e1, e2, e3) == (lattice.e1, lattice.e2, lattice.e3)

    def test_degenerate_lattice_rejected(self):
        with pytest.raises(InvalidLatticeError):
            PeriodLattice(omega2=-1j)
        with pytest.raises(InvalidLatticeError):
            PeriodLattice(omega2=2.0)


class TestWeierstrass:
    """Test zeta, p and sigma against their defining identities."""

    def test_zeta_against_lattice_sum(self, lattice):
        z = 0.9 + 0.3j
        w = _lattice_points(lattice)
        direct = 1.0 / z + np.sum(1.0 / (z - w) + 1.0 / w + z / w ** 2)
        assert abs(weier_zeta(z, lattice) - direct) <= 1e-6

    def test_p_is_minus_zeta_derivative(self, lattice):
        z = 1.3 + 0.6j
        h = 1e-5
        fd = -(weier_zeta(z + h, lattice) - weier_zeta(z - h, lattice)) / (2 * h)
        p = weier_p(z, lattice)
        assert abs(p - fd) <= 1e-8 * abs(p)

    def test_log_sigma_derivative_is_zeta(self, lattice):
        z = 0.5 + 0.3j
        h = 1e-5
        fd = (log_sigma(z + h, lattice) - log_sigma(z - h, lattice)) / (2 * h)
        zeta = weier_zeta(z, lattice)
        assert abs(zeta - fd) <= 1e-8 * abs(zeta)

    def test_sigma_normalized_at_origin(self, lattice):
        z = 1e-4 + 2e-5j
        assert abs(np.exp(log_sigma(z, lattice)) / z - 1.0) < 1e-7

    def test_sigma_quasi_periodicity(self, lattice):
        """sigma(z + omega1) = -exp(eta1 (z + omega1/2)) sigma(z)."""
        z = 0.7 + 0.3j
        lhs = np.exp(log_sigma(z + OMEGA1, lattice))
        rhs = -np.exp(lattice.eta1 * (z + OMEGA1 / 2) + log_sigma(z, lattice))
        assert abs(lhs - rhs) <= 1e-10 * abs(rhs)

    def test_sided_branches_agree_up_to_2pi_i(self, lattice):
        upper = 1.0 + 0.4j
        lower = 1.0 - 0.4j
        assert abs(
            np.exp(log_sigma(upper, lattice, side="upper")) - np.exp(log_sigma(upper, lattice))
        ) <= 1e-10 * abs(np.exp(log_sigma(upper, lattice)))
        assert abs(
            np.exp(log_sigma(lower, lattice, side="lower")) - np.exp(log_sigma(lower, lattice))
        ) <= 1e-10 * abs(np.exp(log_sigma(lower, lattice)))

    def test_upper_branch_is_continuous_along_the_strip(self, lattice):
        """No 2*pi*i jumps between neighbouring points of Im z = |omega2|/4."""
        x = np.linspace(0.0, 3 * OMEGA1, 600) + 0.25j * lattice.omega2.imag
        values = log_sigma(x, lattice, side="upper")
        assert np.max(np.abs(np.diff(values.imag))) < 0.5

    def test_domega2_matches_finite_difference(self, lattice):
        z = 0.6 + 0.2j
        h = 1e-5
        plus = PeriodLattice(omega2=lattice.omega2 + 1j * h)
        minus = PeriodLattice(omega2=lattice.omega2 - 1j * h)
        fd = (log_sigma(z, plus) - log_sigma(z, minus)) / (2j * h)
        value = dlog_sigma_domega2(z, lattice)
        assert abs(value - fd) <= 1e-6 * abs(value)

    def test_homogeneity(self, lattice):
        """z d/dz + omega1 d/domega1 + omega2 d/domega2 of log sigma is 1."""
        z = 0.8 + 0.5j
        total = (
            z * weier_zeta(z, lattice)
            + lattice.omega1 * dlog_sigma_domega1(z, lattice)
            + lattice.omega2 * dlog_sigma_domega2(z, lattice)
        )
        assert abs(total - 1.0) < 1e-10

    def test_pole_rejected(self, lattice):
        with pytest.raises(PoleError):
            weier_zeta(0.0, lattice)
        with pytest.raises(PoleError):
            weier_p(OMEGA1 + lattice.omega2, lattice)


class TestLegendreIntegrals:
    """Test K, K', F and sn."""

    def test_complete_integral_against_quadrature(self):
        k = 0.8
        res = integrate_unit(lambda t: 1.0 / np.sqrt(1.0 - k * k * np.sin(t) ** 2), 0.0, math.pi / 2)
        assert ellint_K(k) == pytest.approx(res.value.real, rel=1e-12)

    def test_complementary_integral(self):
        assert ellint_Kprime(0.6) == ellint_K(0.8)

    def test_incomplete_integral_against_quadrature(self):
        k = 0.7
        res = integrate_unit(
            lambda t: 1.0 / np.sqrt(1.0 - k * k * np.sin(t) ** 2), 0.0, math.asin(0.5)
        )
        assert ellint_F(0.5, k) == pytest.approx(res.value.real, rel=1e-12)

    def test_incomplete_integral_at_one_is_complete(self):
        assert ellint_F(1.0, 0.3) == pytest.approx(ellint_K(0.3), rel=1e-15)
        assert ellint_F(-1.0, 0.3) == pytest.approx(-ellint_K(0.3), rel=1e-15)

    def test_incomplete_integral_beyond_branch_points(self):
        value = ellint_F(3.0, 0.5)
        assert value.imag == pytest.approx(ellint_Kprime(0.5), rel=1e-14)
        assert value.real == pytest.approx(ellint_F(2.0 / 3.0, 0.5), rel=1e-14)

    def test_limit_between_branch_points_rejected(self):
        with pytest.raises(BranchError):
            ellint_F(1.2, 0.5)

    def test_module_outside_unit_interval_rejected(self):
        with pytest.raises(DomainError):
            EllipticModulus(1.0)
        with pytest.raises(DomainError):
            ellint_K(0.0)

    def test_sn_against_scipy(self):
        u = np.array([0.1, 0.7, 1.9])
        sn, _, _, _ = special.ellipj(u, 0.36)
        assert np.allclose(jacobi_sn(u, 0.6).real, sn, atol=1e-12, rtol=0)

    def test_sn_inverts_incomplete_integral(self):
        k = 0.45
        assert jacobi_sn(ellint_F(0.3, k), k).real == pytest.approx(0.3, abs=1e-13)

    def test_module_from_nome(self):
        """At q = exp(-pi b), K'(k)/K(k) = b."""
        k = module_from_nome(math.exp(-math.pi * 0.5))
        assert ellint_Kprime(k) / ellint_K(k) == pytest.approx(0.5, abs=1e-10)
