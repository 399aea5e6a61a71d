"""Domain and parameter types for annulus-to-polygon maps."""
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .elliptic import OMEGA1, PeriodLattice
from .validators import ValidationError

OUTER = "outer"
INNER = "inner"
SIDES = (OUTER, INNER)

ANGLE_SUM_TOL = 1e-9


def encode_float(x: float) -> str:
    """Decimal string with 17 significant digits (round-trips a double)."""
    return format(float(x), ".17g")


def encode_complex(z: complex) -> List[str]:
    z = complex(z)
    return [encode_float(z.real), encode_float(z.imag)]


def decode_complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValidationError(f"Complex value must be [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, dict):
        return complex(float(value.get("re", 0.0)), float(value.get("im", 0.0)))
    return complex(float(value))


def ccw_angle(d_from: complex, d_to: complex) -> float:
    """Counterclockwise angle in [0, 2*pi) turning direction d_from onto d_to."""
    return math.atan2((d_to / d_from).imag, (d_to / d_from).real) % (2.0 * math.pi)


def corner_exponent(w_prev: complex, w: complex, w_next: complex, side: str) -> float:
    """
    Interior angle at ``w`` in units of pi.

    Both polylines are listed counterclockwise: the outer one has the domain on
    its left, the inner one on its right. A zero turn is a slit end (angle 2*pi).
    """
    d_prev, d_next = w_prev - w, w_next - w
    if side == OUTER:
        angle = ccw_angle(d_next, d_prev)
    else:
        angle = ccw_angle(d_prev, d_next)
    if angle < 1e-12:
        angle = 2.0 * math.pi
    return angle / math.pi


@dataclass(frozen=True)
class Vertex:
    """Polygon vertex with interior angle alpha*pi."""

    label: str
    w: complex
    alpha: float

    @property
    def beta(self) -> float:
        return self.alpha - 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {"label": self.label, "w": encode_complex(self.w), "alpha": self.alpha}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Vertex":
        return cls(label=str(data["label"]), w=decode_complex(data["w"]), alpha=float(data["alpha"]))


@dataclass(frozen=True)
class DomainSpec:
    """Outer polyline (boundary of the bounded face) and inner polyline (the hole)."""

    outer: Tuple[Vertex, ...]
    inner: Tuple[Vertex, ...]

    def __post_init__(self):
        object.__setattr__(self, "outer", tuple(self.outer))
        object.__setattr__(self, "inner", tuple(self.inner))

    @property
    def n_outer(self) -> int:
        return len(self.outer)

    @property
    def n_inner(self) -> int:
        return len(self.inner)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(v.label for v in self.outer + self.inner)

    @property
    def vertices(self) -> Tuple[Vertex, ...]:
        return self.outer + self.inner

    def side_vertices(self, side: str) -> Tuple[Vertex, ...]:
        return self.outer if side == OUTER else self.inner

    def betas(self, side: str) -> np.ndarray:
        return np.array([v.beta for v in self.side_vertices(side)], dtype=float)

    def points(self, side: str) -> np.ndarray:
        return np.array([v.w for v in self.side_vertices(side)], dtype=complex)

    def locate(self, label: str) -> Tuple[str, int]:
        for side in SIDES:
            for i, v in enumerate(self.side_vertices(side)):
                if v.label == label:
                    return side, i
        raise KeyError(f"No vertex labelled {label!r}")

    def vertex(self, label: str) -> Vertex:
        side, i = self.locate(label)
        return self.side_vertices(side)[i]

    def global_index(self, label: str) -> int:
        side, i = self.locate(label)
        return i if side == OUTER else self.n_outer + i

    def diameter(self) -> float:
        pts = self.points(OUTER)
        return float(np.max(np.abs(pts[:, None] - pts[None, :])))

    def with_side(self, side: str, vertices: Sequence[Vertex]) -> "DomainSpec":
        if side == OUTER:
            return replace(self, outer=tuple(vertices))
        return replace(self, inner=tuple(vertices))

    def transformed(self, scale: complex, offset: complex) -> "DomainSpec":
        """Image of the domain under w -> scale * w + offset."""
        return DomainSpec(
            outer=tuple(replace(v, w=scale * v.w + offset) for v in self.outer),
            inner=tuple(replace(v, w=scale * v.w + offset) for v in self.inner),
        )

    def moved(self, label: str, w: complex) -> "DomainSpec":
        side, i = self.locate(label)
        verts = list(self.side_vertices(side))
        verts[i] = replace(verts[i], w=complex(w))
        return self.with_side(side, verts)

    def angle_sum_errors(self) -> List[str]:
        """Messages for polylines whose exponents violate the angle-sum rule."""
        problems = []
        total = sum(v.alpha for v in self.outer)
        if abs(total - (self.n_outer - 2)) > ANGLE_SUM_TOL:
            problems.append(
                f"outer polyline: sum of alpha is {total:.12g}, expected {self.n_outer - 2}"
            )
        total = sum(v.alpha for v in self.inner)
        if abs(total - (self.n_inner + 2)) > ANGLE_SUM_TOL:
            problems.append(
                f"inner polyline: sum of alpha is {total:.12g}, expected {self.n_inner + 2}"
            )
        return problems

    def validate(self) -> None:
        labels = self.labels
        if len(set(labels)) != len(labels):
            raise ValidationError("Vertex labels must be unique", path="domain")
        if self.n_outer < 3:
            raise ValidationError("Outer polyline needs at least 3 vertices", path="domain.outer")
        if self.n_inner < 1:
            raise ValidationError("Inner polyline needs at least 1 vertex", path="domain.inner")
        problems = self.angle_sum_errors()
        if problems:
            side = "outer" if problems[0].startswith("outer") else "inner"
            raise ValidationError("; ".join(problems), path=f"domain.{side}")

    def geometric_exponents(self, side: str) -> np.ndarray:
        """Exponents recomputed from vertex positions."""
        verts = self.side_vertices(side)
        n = len(verts)
        return np.array(
            [corner_exponent(verts[i - 1].w, verts[i].w, verts[(i + 1) % n].w, side) for i in range(n)]
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "outer": [v.to_dict() for v in self.outer],
            "inner": [v.to_dict() for v in self.inner],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DomainSpec":
        return cls(
            outer=tuple(Vertex.from_dict(v) for v in data["outer"]),
            inner=tuple(Vertex.from_dict(v) for v in data["inner"]),
        )


def _frozen_array(values: Iterable[float]) -> np.ndarray:
    arr = np.array(list(values), dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AccessoryState:
    """
    Unknowns of the map: prevertex coordinates on the two boundary lines,
    the period omega2 and the constants C1, C2, c.

    Outer prevertices are z = x on Im z = 0; inner ones are z = x + omega2/2.
    ``c`` is a cache of ``sc_map.compute_c``; build states with
    ``sc_map.make_state`` so it stays coherent.
    """

    x_outer: np.ndarray
    x_inner: np.ndarray
    omega2: complex
    C1: complex
    C2: complex
    c: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "x_outer", _frozen_array(self.x_outer))
        object.__setattr__(self, "x_inner", _frozen_array(self.x_inner))
        object.__setattr__(self, "omega2", complex(self.omega2))
        object.__setattr__(self, "C1", complex(self.C1))
        object.__setattr__(self, "C2", complex(self.C2))
        object.__setattr__(self, "c", complex(self.c))

    @cached_property
    def lattice(self) -> PeriodLattice:
        return PeriodLattice(omega2=self.omega2)

    @property
    def modulus(self) -> float:
        return (self.omega2 / (2j * OMEGA1)).real

    @property
    def capacity(self) -> float:
        return 1.0 / self.modulus

    @property
    def z_outer(self) -> np.ndarray:
        return self.x_outer.astype(complex)

    @property
    def z_inner(self) -> np.ndarray:
        return self.x_inner + self.omega2 / 2.0

    def x_of(self, spec: DomainSpec, label: str) -> float:
        side, i = spec.locate(label)
        return float(self.x_outer[i] if side == OUTER else self.x_inner[i])

    def z_of(self, spec: DomainSpec, label: str) -> complex:
        side, i = spec.locate(label)
        return complex(self.z_outer[i] if side == OUTER else self.z_inner[i])

    def parameters(self) -> Dict[str, complex]:
        """Flat name -> value mapping used for tables."""
        values: Dict[str, complex] = {}
        for i, x in enumerate(self.x_outer, start=1):
            values[f"x1_{i}"] = complex(x)
        for i, x in enumerate(self.x_inner, start=1):
            values[f"x2_{i}"] = complex(x)
        values["omega2"] = self.omega2
        values["C1"] = self.C1
        values["C2"] = self.C2
        values["c"] = self.c
        values["modulus"] = complex(self.modulus)
        values["capacity"] = complex(self.capacity)
        return values

    def to_dict(self) -> Dict[str, Any]:
        return {
            "x_outer": [encode_float(x) for x in self.x_outer],
            "x_inner": [encode_float(x) for x in self.x_inner],
            "omega2": encode_complex(self.omega2),
            "C1": encode_complex(self.C1),
            "C2": encode_complex(self.C2),
            "c": encode_complex(self.c),
            "modulus": encode_float(self.modulus),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AccessoryState":
        return cls(
            x_outer=[float(x) for x in data["x_outer"]],
            x_inner=[float(x) for x in data["x_inner"]],
            omega2=decode_complex(data["omega2"]),
            C1=decode_complex(data["C1"]),
            C2=decode_complex(data["C2"]),
            c=decode_complex(data.get("c", 0.0)),
        )


def cyclic_gaps(x: np.ndarray) -> np.ndarray:
    """Gaps between cyclically consecutive coordinates, reduced modulo omega1."""
    x = np.asarray(x, dtype=float)
    return np.mod(np.diff(np.append(x, x[0])), OMEGA1)


def cyclic_order_ok(x: np.ndarray, min_gap: float = 0.0) -> bool:
    """True when the coordinates wind once around the circle in increasing order."""
    if len(x) < 2:
        return True
    gaps = cyclic_gaps(x)
    return bool(np.all(gaps > min_gap)) and abs(gaps.sum() - OMEGA1) < 1e-9


def min_gap(x: np.ndarray) -> float:
    if len(x) < 2:
        return OMEGA1
    return float(np.min(cyclic_gaps(x)))


def first_outer_labels(spec: DomainSpec, count: int = 2) -> Tuple[str, ...]:
    return tuple(v.label for v in spec.outer[:count])


def find_edge(spec: DomainSpec, side: str, w: complex, tol: float = 1e-9) -> Optional[int]:
    """Index i of the edge (vertex i -> vertex i+1) whose interior contains ``w``."""
    verts = spec.side_vertices(side)
    n = len(verts)
    scale = max(spec.diameter(), 1.0)
    for i in range(n):
        wa, wb = verts[i].w, verts[(i + 1) % n].w
        edge = wb - wa
        if abs(edge) == 0:
            continue
        s = ((w - wa) * edge.conjugate()).real / abs(edge) ** 2
        if 0.0 < s < 1.0 and abs(wa + s * edge - w) <= tol * scale:
            return i
    return None
