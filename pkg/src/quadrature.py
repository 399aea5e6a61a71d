"""Adaptive Gauss-Legendre quadrature for complex integrands."""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy import special

from .errors import AccuracyError

DEFAULT_NODES = 32
DEFAULT_RTOL = 1e-12
MAX_DEPTH = 48


@lru_cache(maxsize=8)
def gauss_legendre(npt: int = DEFAULT_NODES) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    nodes, weights = special.roots_legendre(npt)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    error: float
    panels: int


def _panel(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, npt: int) -> Tuple[complex, float]:
    nodes, weights = gauss_legendre(npt)
    half = 0.5 * (hi - lo)
    vals = np.asarray(g(lo + half * (nodes + 1.0)), dtype=complex)
    return complex(half * (weights @ vals)), float(half * (weights @ np.abs(vals)))


def integrate_unit(
    g: Callable[[np.ndarray], np.ndarray],
    lo: float = 0.0,
    hi: float = 1.0,
    rtol: float = DEFAULT_RTOL,
    atol: float = 0.0,
    npt: int = DEFAULT_NODES,
    max_depth: int = MAX_DEPTH,
) -> QuadratureResult:
    """
    Integrate a vectorized function of a real parameter over [lo, hi].

    A panel is accepted when its Gauss-Legendre value agrees with the sum over
    its two halves to within the panel's share of max(atol, rtol * scale),
    where scale is an estimate of the integral of |g|.

    Args:
        g: Callable mapping an array of parameters to complex values
        lo: Lower limit
        hi: Upper limit
        rtol: Relative tolerance
        atol: Absolute tolerance
        npt: Gauss-Legendre points per panel
        max_depth: Maximum bisection depth

    Returns:
        QuadratureResult with value, error estimate and accepted panel count
    """
    if hi == lo:
        return QuadratureResult(0j, 0.0, 0)
    whole, scale = _panel(g, lo, hi, npt)
    tol = max(atol, rtol * scale)
    length = hi - lo

    total = 0j
    error = 0.0
    panels = 0
    stack = [(lo, hi, whole, 0)]
    while stack:
        a, b, coarse, depth = stack.pop()
        mid = 0.5 * (a + b)
        left, _ = _panel(g, a, mid, npt)
        right, _ = _panel(g, mid, b, npt)
        fine = left + right
        diff = abs(fine - coarse)
        if diff <= tol * (b - a) / length or diff <= 1e-15 * abs(fine):
            total += fine
            error += diff
            panels += 1
            continue
        if depth >= max_depth:
            raise AccuracyError(
                f"Quadrature failed to converge on [{a}, {b}]",
                estimate=error + diff,
                details={"lo": a, "hi": b, "depth": depth},
            )
        stack.append((mid, b, right, depth + 1))
        stack.append((a, mid, left, depth + 1))
    return QuadratureResult(total, error, panels)


def integrate_segment(
    f: Callable[[np.ndarray], np.ndarray],
    a: complex,
    b: complex,
    rtol: float = DEFAULT_RTOL,
    atol: float = 0.0,
) -> QuadratureResult:
    """Integrate f along the straight segment from a to b in the complex plane."""
    delta = complex(b) - complex(a)
    return integrate_unit(lambda s: delta * f(a + delta * s), rtol=rtol, atol=atol)


def integrate_to_singular_end(
    f: Callable[[np.ndarray], np.ndarray],
    a: complex,
    b: complex,
    exponent: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = 0.0,
) -> QuadratureResult:
    """
    Integrate f from a to b where f ~ (xi - b)^exponent near b, exponent > -1.

    The substitution xi = b + (a - b) s^gamma with gamma = 1/(exponent + 1)
    removes the power singularity; s runs from 1 to 0.
    """
    if exponent <= -1.0:
        raise ValueError(f"Endpoint exponent must exceed -1, got {exponent}")
    gamma = 1.0 / (exponent + 1.0)
    delta = complex(a) - complex(b)

    def g(s):
        return delta * gamma * s ** (gamma - 1.0) * f(b + delta * s ** gamma)

    res = integrate_unit(g, rtol=rtol, atol=atol)
    return QuadratureResult(-res.value, res.error, res.panels)
