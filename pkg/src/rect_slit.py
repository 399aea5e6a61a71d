"""Closed-form accessory parameters for the rectangle (-1, 1) x (-b, b) with slit [a1, a2]."""
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .domain import INNER, OUTER, AccessoryState, DomainSpec, Vertex
from .elliptic import (
    OMEGA1,
    EllipticModulus,
    ellint_F,
    ellint_K,
    ellint_Kprime,
    jacobi_sn,
    module_from_nome,
)
from .errors import DegenerateDomainError, NumericalError
from .logging_config import get_logger
from .quadrature import integrate_unit
from .sc_map import fix_frame, make_state, transform_frame
from .validators import GeometryValidator, validate_and_raise

logger = get_logger("rect_slit")

BETA_METHODS = ("closed", "quadrature")
CROSS_RATIO_TOL = 1e-12
MAX_ELL = 1.0 - 1e-14

# Inputs of the published five-row table, all with b = 0.5.
REFERENCE_RECTANGLES: Tuple[Tuple[float, float, float], ...] = (
    (-0.5, 0.5, 0.5),
    (-0.25, 0.25, 0.5),
    (-0.75, 0.75, 0.5),
    (0.1, 0.9, 0.5),
    (-0.1, 0.5, 0.5),
)

OUTER_LABELS = ("o1", "o2", "o3", "o4")
SLIT_LABELS = ("a2", "a1")


@dataclass(frozen=True)
class RectSlitInput:
    """Rectangle half-height ``b`` and slit endpoints a1 < a2 on the real axis."""

    a1: float
    a2: float
    b: float

    def validate(self) -> None:
        is_valid, msg = GeometryValidator.validate_rect_slit(self.b, self.a1, self.a2)
        validate_and_raise(is_valid, msg, path="init.rect_slit")

    def to_dict(self) -> Dict[str, float]:
        return {"a1": self.a1, "a2": self.a2, "b": self.b}

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "RectSlitInput":
        return cls(a1=float(data["a1"]), a2=float(data["a2"]), b=float(data["b"]))


@dataclass(frozen=True)
class RectSlitSolution:
    """Moduli, prevertex angles and the full map state of one rectangle-with-slit."""

    input: RectSlitInput
    k: EllipticModulus
    ell: EllipticModulus
    beta11: float
    beta12: float
    state: AccessoryState
    spec: DomainSpec
    cross_ratio_error: float

    @property
    def omega2(self) -> complex:
        return self.state.omega2

    @property
    def modulus(self) -> float:
        return self.state.modulus

    def to_row(self) -> Dict[str, float]:
        return {
            "a1": self.input.a1,
            "a2": self.input.a2,
            "omega2": self.omega2.imag,
            "z11": self.beta11,
            "z12": self.beta12,
            "modulus": self.modulus,
        }


def module_from_height(b: float) -> EllipticModulus:
    """
    Elliptic module k with K'(k)/K(k) = b.

    Args:
        b: Rectangle half-height (width is 2)

    Returns:
        k = (theta2/theta3)^2 at nome exp(-pi b)
    """
    if b <= 0:
        raise ValueError(f"Half-height must be positive, got {b}")
    return module_from_nome(math.exp(-math.pi * b))


def _slit_module(s1: float, s2: float) -> Tuple[float, float]:
    """Module ell matching the cross ratio of (-1/ell, -1, 1, 1/ell) with (-1, s1, s2, 1)."""
    root = math.sqrt((1.0 - s1 * s1) * (1.0 - s2 * s2))
    candidates = [(s1 * s2 - 1.0 + sign * root) / (s1 - s2) for sign in (1.0, -1.0)]
    inside = [ell for ell in candidates if 0.0 < ell < 1.0]
    if not inside:
        raise DegenerateDomainError(
            "No elliptic module in (0, 1) for the slit", details={"candidates": candidates}
        )
    ell = inside[0]
    lhs = ((1.0 + ell) / (1.0 - ell)) ** 2
    rhs = (1.0 + s2) * (1.0 - s1) / ((1.0 + s1) * (1.0 - s2))
    return ell, abs(lhs - rhs) / max(1.0, abs(rhs))


def _beta_closed(v: float, ell: EllipticModulus, big_k: float) -> float:
    return math.pi / 2.0 - math.pi / (2.0 * big_k) * float(ellint_F(1.0 / (ell.k * v), ell))


def _beta_integral(v: float, ell: EllipticModulus) -> float:
    """int_{1/ell}^{v} dxi / sqrt((xi^2 - 1)(ell^2 xi^2 - 1)) with xi = 1/ell + u^2."""
    lk = ell.k
    upper = math.sqrt(v - 1.0 / lk)

    def g(s):
        u = upper * s
        xi = 1.0 / lk + u * u
        return upper * 2.0 / np.sqrt((xi * xi - 1.0) * lk * (lk * xi + 1.0))

    return integrate_unit(g, rtol=1e-14).value.real


def _prevertex_betas(
    s1: float, ell: EllipticModulus, k: EllipticModulus, method: str
) -> Tuple[float, float]:
    c = s1 + ell.k
    d = -(1.0 + ell.k * s1)
    v11 = (d + c * k.k) / (ell.k * (c + d * k.k))
    v12 = (c * k.k - d) / (ell.k * (d * k.k - c))
    big_k = ellint_K(ell)
    if method == "closed":
        return _beta_closed(v11, ell, big_k), _beta_closed(v12, ell, big_k)
    scale = math.pi / (2.0 * big_k)
    return scale * _beta_integral(v11, ell), math.pi - scale * _beta_integral(-v12, ell)


def rect_slit_domain(b: float, a1: float, a2: float) -> DomainSpec:
    """Rectangle vertices counterclockwise from 1+ib; the slit is a2 -> a1."""
    corners = (complex(1, b), complex(-1, b), complex(-1, -b), complex(1, -b))
    return DomainSpec(
        outer=tuple(Vertex(label, w, 0.5) for label, w in zip(OUTER_LABELS, corners)),
        inner=(Vertex("a2", complex(a2), 2.0), Vertex("a1", complex(a1), 2.0)),
    )


def solve(
    data: RectSlitInput,
    beta_method: str = "closed",
    frame: Optional[Tuple[complex, complex]] = None,
) -> RectSlitSolution:
    """
    Exact accessory parameters of the rectangle with an axial slit.

    Args:
        data: Rectangle and slit
        beta_method: "closed" (incomplete elliptic integral) or "quadrature"
        frame: Optional (scale, offset) applied as w -> scale*w + offset

    Returns:
        RectSlitSolution with C1, C2 fixed on the first two outer vertices

    Raises:
        ValidationError: If the input is not a valid rectangle with slit
        DegenerateDomainError: If the slit is too close to the sides to be represented
    """
    data.validate()
    if beta_method not in BETA_METHODS:
        raise ValueError(f"beta_method must be one of {BETA_METHODS}, got {beta_method!r}")

    k = module_from_height(data.b)
    big_k = ellint_K(k)
    s1, s2 = (float(np.real(jacobi_sn(big_k * a, k))) for a in (data.a1, data.a2))
    ell_value, ratio_error = _slit_module(s1, s2)
    if ell_value > MAX_ELL:
        raise DegenerateDomainError(
            f"Slit [{data.a1}, {data.a2}] is too close to the rectangle sides",
            details={"ell": ell_value},
        )
    if ratio_error > CROSS_RATIO_TOL:
        raise NumericalError(
            f"Cross-ratio identity violated by {ratio_error:.3g}", {"ell": ell_value}
        )
    ell = EllipticModulus(ell_value)
    beta11, beta12 = _prevertex_betas(s1, ell, k, beta_method)

    half_height = 0.5 * math.pi * ellint_Kprime(ell) / ellint_K(ell)
    spec = rect_slit_domain(data.b, data.a1, data.a2)
    state = make_state(
        spec,
        x_outer=[beta11, beta12, OMEGA1 - beta12, OMEGA1 - beta11],
        x_inner=[0.0, math.pi],
        omega2=2j * half_height,
    )
    state = fix_frame(state, spec)
    if frame is not None:
        state, spec = transform_frame(state, spec, *frame)
    logger.debug(
        f"Rect slit a=({data.a1}, {data.a2}) b={data.b}: ell={ell_value:.17g}, "
        f"modulus={state.modulus:.17g}"
    )
    return RectSlitSolution(
        input=data,
        k=k,
        ell=ell,
        beta11=beta11,
        beta12=beta12,
        state=state,
        spec=spec,
        cross_ratio_error=ratio_error,
    )


def rectangle_report(
    rows: Optional[Iterable[RectSlitInput]] = None, beta_method: str = "closed"
) -> pd.DataFrame:
    """
    One row (a1, a2, omega2, z11, z12, modulus) per rectangle-with-slit.

    ``omega2`` holds Im(omega2). Defaults to the five published b = 0.5 rows.
    """
    if rows is None:
        rows = [RectSlitInput(a1, a2, b) for a1, a2, b in REFERENCE_RECTANGLES]
    records: List[Dict[str, float]] = [solve(row, beta_method=beta_method).to_row() for row in rows]
    return pd.DataFrame.from_records(
        records, columns=["a1", "a2", "omega2", "z11", "z12", "modulus"]
    )


# Name used by older callers of the five-row report.
table1_report = rectangle_report
