"""Elliptic special functions on the period lattice (2*pi, omega2).

Theta series use the nome q = exp(i*pi*omega2/omega1) and the argument
v = pi*z/omega1. Weierstrass functions are expressed through theta1 and its
logarithmic derivatives; the lattice sums only appear in the test suite.
"""
import math
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
from scipy import special

from .errors import BranchError, DomainError, InvalidLatticeError, PoleError

OMEGA1 = 2.0 * math.pi

# Relative size of the first omitted series term.
SERIES_EPS = 1e-17
MAX_SERIES_TERMS = 64
POLE_TOL = 1e-13
LANDEN_STOP = 1e-14

ArrayLike = Union[complex, float, np.ndarray]


def _as_complex(z: ArrayLike) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=complex)
    return arr, arr.ndim == 0


def _finish(values: np.ndarray, scalar: bool):
    if scalar:
        return complex(values)
    return values


def _log_nome(q: complex) -> complex:
    q = complex(q)
    if not abs(q) < 1.0:
        raise InvalidLatticeError(f"Nome must satisfy |q| < 1, got {q}", {"nome": q})
    if q == 0:
        raise InvalidLatticeError("Nome must be non-zero", {"nome": q})
    return complex(np.log(q))


def _series_length(log_q: complex) -> int:
    """Number of theta terms so the first omitted one is below SERIES_EPS relative."""
    rate = -log_q.real  # -log|q| > 0
    for n in range(2, MAX_SERIES_TERMS):
        if rate * (n * n - 0.5) - 4.0 * math.log(2 * n + 1) > -math.log(SERIES_EPS):
            return n
    return MAX_SERIES_TERMS


def _product_length(log_q: complex) -> int:
    """Number of factors for the product form; q^(2n) e^(2 Im v) must underflow."""
    rate = -log_q.real
    n = int(math.ceil((-math.log(SERIES_EPS) / rate + 1.0) / 2.0)) + 1
    return max(2, min(n, MAX_SERIES_TERMS))


def _theta1_raw(v0: np.ndarray, log_q: complex, order: int) -> np.ndarray:
    """Unreduced q-series of the order-th derivative of theta1."""
    n = np.arange(_series_length(log_q))
    k = 2 * n + 1
    coef = 2.0 * np.where(n % 2 == 0, 1.0, -1.0) * np.exp(log_q * (n + 0.5) ** 2) * k ** order
    arg = v0[..., None] * k
    if order == 0:
        basis = np.sin(arg)
    elif order == 1:
        basis = np.cos(arg)
    elif order == 2:
        basis = -np.sin(arg)
    else:
        basis = -np.cos(arg)
    return basis @ coef


def _reduce(v: np.ndarray, log_q: complex) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split v = m*pi*tau + n*pi + v0 with v0 in the fundamental cell."""
    pi_tau = -1j * log_q
    m = np.round(v.imag / pi_tau.imag)
    v1 = v - m * pi_tau
    n = np.round(v1.real / math.pi)
    return m, n, v1 - n * math.pi


def theta1(v: ArrayLike, q: complex, order: int = 0):
    """
    Jacobi theta1(v, q) or one of its first three v-derivatives.

    Args:
        v: Argument (scalar or array)
        q: Nome with 0 < |q| < 1
        order: Derivative order 0..3

    Returns:
        Value(s) of the requested derivative
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    return _theta1(v, _log_nome(q), order)


def _theta1(v: ArrayLike, log_q: complex, order: int):
    arr, scalar = _as_complex(v)
    m, n, v0 = _reduce(arr, log_q)
    factor = np.where((m + n) % 2 == 0, 1.0, -1.0) * np.exp(-(m ** 2) * log_q - 2j * m * v0)
    total = np.zeros_like(v0)
    for j in range(order + 1):
        total = total + math.comb(order, j) * (-2j * m) ** (order - j) * _theta1_raw(v0, log_q, j)
    return _finish(factor * total, scalar)


def theta1_log_derivative(v: ArrayLike, q: complex, order: int = 1):
    """theta1'/theta1 (order 1) or its v-derivative (order 2)."""
    return _theta1_log_derivative(v, _log_nome(q), order)


def _theta1_log_derivative(v: ArrayLike, log_q: complex, order: int):
    arr, scalar = _as_complex(v)
    m, _, v0 = _reduce(arr, log_q)
    t0 = _theta1_raw(v0, log_q, 0)
    t1 = _theta1_raw(v0, log_q, 1)
    if order == 1:
        out = -2j * m + t1 / t0
    elif order == 2:
        t2 = _theta1_raw(v0, log_q, 2)
        out = (t2 * t0 - t1 * t1) / (t0 * t0)
    else:
        raise ValueError(f"order must be 1 or 2, got {order}")
    return _finish(out, scalar)


def _log_theta1_principal(v: np.ndarray, log_q: complex) -> np.ndarray:
    m, n, v0 = _reduce(v, log_q)
    parity = np.where((m + n) % 2 == 0, 0.0, math.pi)
    return 1j * parity - (m ** 2) * log_q - 2j * m * v0 + np.log(_theta1_raw(v0, log_q, 0))


def _log_theta1_upper(v: np.ndarray, log_q: complex) -> np.ndarray:
    """Product-form log theta1, continuous for 0 <= Im v < -Re(log q)."""
    n = np.arange(_product_length(log_q))
    q2n = np.exp(2.0 * n * log_q)
    e = np.exp(2j * v)[..., None]
    head = 0.5j * math.pi + 0.25 * log_q - 1j * v
    first = np.log1p(-q2n * e).sum(axis=-1)
    rest = (np.log1p(-q2n[1:]) + np.log1p(-q2n[1:] / e)).sum(axis=-1)
    return head + first + rest


def _log_theta1_sided(v: np.ndarray, log_q: complex, upper) -> np.ndarray:
    upper = np.broadcast_to(np.asarray(upper, dtype=bool), v.shape)
    lower_vals = _log_theta1_upper(-v, log_q) - 1j * math.pi
    upper_vals = _log_theta1_upper(v, log_q)
    return np.where(upper, upper_vals, lower_vals)


def theta_nulls(q: complex) -> Tuple[complex, complex, complex]:
    """Theta constants (theta2(0), theta3(0), theta4(0)); q = 0 gives (0, 1, 1)."""
    q = complex(q)
    if q == 0:
        return 0j, 1 + 0j, 1 + 0j
    log_q = _log_nome(q)
    n = np.arange(_series_length(log_q))
    theta2 = 2.0 * np.exp(log_q * (n + 0.5) ** 2).sum()
    squares = np.exp(log_q * n[1:] ** 2)
    theta3 = 1.0 + 2.0 * squares.sum()
    theta4 = 1.0 + 2.0 * (np.where(n[1:] % 2 == 0, 1.0, -1.0) * squares).sum()
    return complex(theta2), complex(theta3), complex(theta4)


@dataclass(frozen=True)
class PeriodLattice:
    """Lattice generated by omega1 (real, 2*pi) and omega2 (Im omega2 > 0)."""

    omega2: complex
    omega1: float = OMEGA1
    nome: complex = field(init=False)
    eta1: complex = field(init=False)
    eta2: complex = field(init=False)
    g2: complex = field(init=False)
    e1: complex = field(init=False)
    e2: complex = field(init=False)
    e3: complex = field(init=False)
    log_nome: complex = field(init=False, repr=False)
    theta1_prime0: complex = field(init=False, repr=False)

    def __post_init__(self):
        omega2 = complex(self.omega2)
        omega1 = float(self.omega1)
        if not omega1 > 0:
            raise InvalidLatticeError(f"omega1 must be positive, got {omega1}")
        tau = omega2 / omega1
        if not tau.imag > 0:
            raise InvalidLatticeError(
                f"Im(omega2/omega1) must be positive, got omega2={omega2}", {"omega2": omega2}
            )
        log_q = 1j * math.pi * tau
        object.__setattr__(self, "omega2", omega2)
        object.__setattr__(self, "omega1", omega1)
        object.__setattr__(self, "log_nome", log_q)
        object.__setattr__(self, "nome", complex(np.exp(log_q)))

        zero = np.zeros(1, dtype=complex)
        t1 = complex(_theta1_raw(zero, log_q, 1)[0])
        t3 = complex(_theta1_raw(zero, log_q, 3)[0])
        eta1 = -(math.pi ** 2 / (3.0 * omega1)) * t3 / t1
        object.__setattr__(self, "theta1_prime0", t1)
        object.__setattr__(self, "eta1", eta1)
        object.__setattr__(self, "eta2", (eta1 * omega2 - 2j * math.pi) / omega1)

        th2, th3, th4 = theta_nulls(self.nome)
        g2 = (2.0 / 3.0) * (math.pi / omega1) ** 4 * (th2 ** 8 + th3 ** 8 + th4 ** 8)
        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "e1", weier_p(omega1 / 2, self))
        object.__setattr__(self, "e2", weier_p(omega2 / 2, self))
        object.__setattr__(self, "e3", weier_p((omega1 + omega2) / 2, self))

    @property
    def tau(self) -> complex:
        return self.omega2 / self.omega1

    @property
    def half_height(self) -> float:
        """Height of the fundamental strip, |omega2|/2 = log(1/r) of the annulus."""
        return self.omega2.imag / 2.0

    @property
    def annulus_radius(self) -> float:
        return math.exp(-self.half_height)

    @property
    def modulus(self) -> float:
        """Conformal modulus m = omega2 / (2 i omega1)."""
        return (self.omega2 / (2j * self.omega1)).real

    @property
    def capacity(self) -> float:
        return 1.0 / self.modulus

    @classmethod
    def from_modulus(cls, modulus: float) -> "PeriodLattice":
        return cls(omega2=4j * math.pi * modulus)


def half_period_constants(lattice: PeriodLattice) -> Tuple[complex, ...]:
    """Return (eta1, eta2, g2, e1, e2, e3)."""
    return lattice.eta1, lattice.eta2, lattice.g2, lattice.e1, lattice.e2, lattice.e3


def _check_poles(z: np.ndarray, lattice: PeriodLattice) -> None:
    v = math.pi * z / lattice.omega1
    _, _, v0 = _reduce(v, lattice.log_nome)
    near = np.abs(v0) * lattice.omega1 / math.pi < POLE_TOL
    if np.any(near):
        raise PoleError(
            "Argument lies on a lattice point",
            {"z": complex(np.ravel(z)[np.argmax(np.ravel(near))])},
        )


def weier_zeta(z: ArrayLike, lattice: PeriodLattice):
    """Weierstrass zeta function."""
    arr, scalar = _as_complex(z)
    _check_poles(arr, lattice)
    scale = math.pi / lattice.omega1
    out = lattice.eta1 * arr / lattice.omega1 + scale * _theta1_log_derivative(
        scale * arr, lattice.log_nome, 1
    )
    return _finish(out, scalar)


def weier_p(z: ArrayLike, lattice: PeriodLattice):
    """Weierstrass p function."""
    arr, scalar = _as_complex(z)
    _check_poles(arr, lattice)
    scale = math.pi / lattice.omega1
    out = -lattice.eta1 / lattice.omega1 - scale ** 2 * _theta1_log_derivative(
        scale * arr, lattice.log_nome, 2
    )
    return _finish(out, scalar)


def log_sigma(z: ArrayLike, lattice: PeriodLattice, side=None):
    """
    Logarithm of the Weierstrass sigma function, normalized so sigma(z) ~ z.

    Args:
        z: Argument(s), not on the lattice
        lattice: Period lattice
        side: None for the principal branch of log theta1; "upper" or "lower"
            for the branch continuous on the closed strip above (below) the
            real axis of height |omega2|/2; a boolean array selects per element
            (True = upper)

    Returns:
        log sigma(z) on the selected branch
    """
    arr, scalar = _as_complex(z)
    _check_poles(arr, lattice)
    scale = math.pi / lattice.omega1
    v = scale * arr
    if side is None:
        log_t = _log_theta1_principal(v, lattice.log_nome)
    else:
        if isinstance(side, str):
            if side not in ("upper", "lower"):
                raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
            side = side == "upper"
        log_t = _log_theta1_sided(v, lattice.log_nome, side)
    const = np.log(scale * lattice.theta1_prime0)
    out = lattice.eta1 * arr ** 2 / (2.0 * lattice.omega1) + log_t - const
    return _finish(out, scalar)


def dlog_sigma_domega2(z: ArrayLike, lattice: PeriodLattice):
    """Partial derivative of log sigma(z; omega1, omega2) with respect to omega2."""
    arr, scalar = _as_complex(z)
    zeta = weier_zeta(arr, lattice)
    wp = weier_p(arr, lattice)
    bracket = (
        0.5 * lattice.omega1 * (wp - zeta ** 2)
        + lattice.eta1 * (arr * zeta - 1.0)
        - lattice.g2 / 24.0 * lattice.omega1 * arr ** 2
    )
    return _finish(-bracket / (2j * math.pi), scalar)


def dlog_sigma_domega1(z: ArrayLike, lattice: PeriodLattice):
    """Partial derivative of log sigma(z; omega1, omega2) with respect to omega1."""
    arr, scalar = _as_complex(z)
    zeta = weier_zeta(arr, lattice)
    wp = weier_p(arr, lattice)
    bracket = (
        0.5 * lattice.omega2 * (wp - zeta ** 2)
        + lattice.eta2 * (arr * zeta - 1.0)
        - lattice.g2 / 24.0 * lattice.omega2 * arr ** 2
    )
    return _finish(bracket / (2j * math.pi), scalar)


@dataclass(frozen=True)
class EllipticModulus:
    """Module k in (0, 1) and its complement k' = sqrt(1 - k^2)."""

    k: float
    kprime: float = field(init=False)

    def __post_init__(self):
        k = float(self.k)
        if not 0.0 < k < 1.0:
            raise DomainError(f"Elliptic module must lie in (0, 1), got {k}", {"k": k})
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "kprime", math.sqrt((1.0 - k) * (1.0 + k)))

    @property
    def complement(self) -> "EllipticModulus":
        return EllipticModulus(self.kprime)


def _modulus(k) -> EllipticModulus:
    return k if isinstance(k, EllipticModulus) else EllipticModulus(k)


def ellint_K(k) -> float:
    """Complete elliptic integral of the first kind via the arithmetic-geometric mean."""
    mod = _modulus(k)
    a, b = 1.0, mod.kprime
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (2.0 * a)


def ellint_Kprime(k) -> float:
    """Complementary integral K'(k) = K(k')."""
    return ellint_K(_modulus(k).kprime)


def ellint_F(x: complex, k):
    """
    Incomplete elliptic integral F(x, k) = int_0^x dt / sqrt((1-t^2)(1-k^2 t^2)).

    Real limits beyond 1/k take the value continued along the real axis from
    the upper half-plane, iK' + F(1/(k x)); limits in (1, 1/k] are rejected.
    """
    mod = _modulus(k)
    x = complex(x)
    if x == 0:
        return 0.0
    if x.imag != 0.0:
        val = x * special.elliprf(1.0 - x * x, 1.0 - mod.k ** 2 * x * x, 1.0)
        return complex(val)
    xr = x.real
    sign = 1.0 if xr > 0 else -1.0
    ax = abs(xr)
    if ax < 1.0:
        return float(xr * special.elliprf(1.0 - xr * xr, 1.0 - mod.k ** 2 * xr * xr, 1.0))
    if ax == 1.0:
        return sign * ellint_K(mod)
    if ax <= 1.0 / mod.k:
        raise BranchError(
            f"Real limit {xr} lies between the branch points 1 and 1/k",
            {"x": xr, "k": mod.k},
        )
    inner = float(ellint_F(1.0 / (mod.k * ax), mod))
    return sign * complex(inner, ellint_Kprime(mod))


def jacobi_sn(u: ArrayLike, k):
    """Jacobi elliptic sine by descending Landen transformations."""
    mod = _modulus(k)
    arr, scalar = _as_complex(u)
    moduli = []
    kk, kp = mod.k, mod.kprime
    while kk > LANDEN_STOP and len(moduli) < 32:
        k1 = (1.0 - kp) / (1.0 + kp)
        moduli.append(k1)
        arr = arr / (1.0 + k1)
        kk = k1
        kp = math.sqrt((1.0 - k1) * (1.0 + k1))
    s = np.sin(arr)
    for k1 in reversed(moduli):
        denom = 1.0 + k1 * s * s
        if np.any(np.abs(denom) < 1e-14 * np.maximum(1.0, np.abs(s))):
            raise PoleError("Argument is at a pole of sn", {"u": u, "k": mod.k})
        s = (1.0 + k1) * s / denom
    return _finish(s, scalar)


def module_from_nome(q: float) -> EllipticModulus:
    """k = (theta2/theta3)^2 at nome q."""
    th2, th3, _ = theta_nulls(q)
    return EllipticModulus((th2 / th3).real ** 2)


def log_theta1_sided(v: ArrayLike, lattice: PeriodLattice, upper):
    """
    log theta1(v) on the branch continuous over the closed half-strip.

    ``upper`` (bool or boolean array) selects 0 <= Im v <= |omega2|/2 * pi/omega1
    (True) or the mirrored strip below the real axis (False).
    """
    arr, scalar = _as_complex(v)
    return _finish(_log_theta1_sided(arr, lattice.log_nome, upper), scalar)
