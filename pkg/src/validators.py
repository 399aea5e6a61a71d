"""Input validation utilities for domains, slits and pipeline settings."""
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from matplotlib.path import Path as PolygonPath

from .errors import RingMapError


class ValidationError(RingMapError):
    """Raised when validation fails; ``path`` names the offending field."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class ReferenceMismatchError(ValidationError):
    """A computed domain has no matching row in a reference table."""
    pass


ANGLE_TOL = 1e-9


def _segments_cross(p1: complex, p2: complex, q1: complex, q2: complex) -> bool:
    """Proper intersection of two closed segments (touching counts)."""

    def orient(a, b, c):
        val = ((b - a).conjugate() * (c - a)).imag
        return 0 if abs(val) < 1e-14 else (1 if val > 0 else -1)

    def on_segment(a, b, c):
        return (
            min(a.real, b.real) - 1e-14 <= c.real <= max(a.real, b.real) + 1e-14
            and min(a.imag, b.imag) - 1e-14 <= c.imag <= max(a.imag, b.imag) + 1e-14
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_segment(p1, p2, q1))
        or (o2 == 0 and on_segment(p1, p2, q2))
        or (o3 == 0 and on_segment(q1, q2, p1))
        or (o4 == 0 and on_segment(q1, q2, p2))
    )


class GeometryValidator:
    """Checks on polygon geometry and slit parameters."""

    @staticmethod
    def validate_rect_slit(b: float, a1: float, a2: float) -> Tuple[bool, str]:
        """
        Validate the rectangle (-1, 1) x (-b, b) with slit [a1, a2].

        Returns:
            Tuple of (is_valid, error_message)
        """
        for name, value in (("b", b), ("a1", a1), ("a2", a2)):
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                return False, f"{name} must be a finite number"
        if b <= 0:
            return False, f"Half-height b must be positive, got {b}"
        if not -1.0 < a1 < a2 < 1.0:
            return False, f"Slit endpoints must satisfy -1 < a1 < a2 < 1, got a1={a1}, a2={a2}"
        return True, ""

    @staticmethod
    def validate_polyline(points: Sequence[complex], minimum: int = 1) -> Tuple[bool, str]:
        pts = list(points)
        if len(pts) < minimum:
            return False, f"Polyline needs at least {minimum} vertices, got {len(pts)}"
        for i, p in enumerate(pts):
            if not (math.isfinite(p.real) and math.isfinite(p.imag)):
                return False, f"Vertex {i} is not finite"
        for i in range(len(pts)):
            if len(pts) > 1 and abs(pts[i] - pts[(i + 1) % len(pts)]) < 1e-14:
                return False, f"Vertices {i} and {(i + 1) % len(pts)} coincide"
        return True, ""

    @staticmethod
    def validate_nesting(outer: Sequence[complex], inner: Sequence[complex]) -> Tuple[bool, str]:
        """
        Check that the inner polyline lies strictly inside the outer polygon.

        Args:
            outer: Outer vertices, counterclockwise
            inner: Inner vertices (a slit may be degenerate)

        Returns:
            Tuple of (is_valid, error_message)
        """
        outer = list(outer)
        inner = list(inner)
        polygon = PolygonPath(np.array([[p.real, p.imag] for p in outer] + [[outer[0].real, outer[0].imag]]))
        inside = polygon.contains_points(np.array([[p.real, p.imag] for p in inner]))
        if not np.all(inside):
            bad = int(np.argmin(inside))
            return False, f"Inner vertex {bad} at {inner[bad]} is not inside the outer polygon"
        n, m = len(outer), len(inner)
        for i in range(n):
            for j in range(m):
                if m == 1:
                    break
                if _segments_cross(outer[i], outer[(i + 1) % n], inner[j], inner[(j + 1) % m]):
                    return False, f"Outer edge {i} meets inner edge {j}"
        return True, ""

    @staticmethod
    def validate_orientation(points: Sequence[complex]) -> Tuple[bool, str]:
        """Outer polygon must be listed counterclockwise."""
        pts = list(points)
        area = 0.0
        for i in range(len(pts)):
            a, b = pts[i], pts[(i + 1) % len(pts)]
            area += a.real * b.imag - b.real * a.imag
        if area <= 0:
            return False, "Outer polyline must be listed counterclockwise"
        return True, ""

    @staticmethod
    def validate_slit_angles(phi1: float, phi2: float, alpha: float) -> Tuple[bool, str]:
        """A slit splits the interior angle alpha*pi into phi1*pi and phi2*pi."""
        if phi1 <= 0 or phi2 <= 0:
            return False, f"Slit angles must be positive, got phi1={phi1}, phi2={phi2}"
        if abs(phi1 + phi2 - alpha) > ANGLE_TOL:
            return False, (
                f"Slit angles must add up to the vertex exponent {alpha}, "
                f"got phi1 + phi2 = {phi1 + phi2}"
            )
        return True, ""

    @staticmethod
    def validate_tolerance(value: float, name: str) -> Tuple[bool, str]:
        if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
            return False, f"{name} must be a positive number, got {value!r}"
        return True, ""

    @staticmethod
    def validate_cyclic_group(indices: Sequence[int], count: int) -> Tuple[bool, str]:
        """Indices must form one contiguous run on a cycle of length ``count``."""
        idx = sorted(set(indices))
        if len(idx) != len(list(indices)):
            return False, "Merge group lists a vertex twice"
        if len(idx) < 2:
            return False, "Merge group needs at least two vertices"
        if len(idx) >= count:
            return False, "Merge group cannot contain the whole polyline"
        members = set(idx)
        starts = [i for i in idx if (i - 1) % count not in members]
        if len(starts) != 1:
            return False, "Merge group is not contiguous along the polyline"
        return True, ""


def cyclic_run(indices: Sequence[int], count: int) -> List[int]:
    """Order a contiguous cyclic group starting at its first element."""
    members = set(indices)
    start = next(i for i in members if (i - 1) % count not in members)
    return [(start + k) % count for k in range(len(members))]


def validate_and_raise(is_valid: bool, error_message: str, path: Optional[str] = None) -> None:
    """
    Raise ValidationError if validation failed.

    Args:
        is_valid: Validation result
        error_message: Error message to raise
        path: Field path reported with the error

    Raises:
        ValidationError: If validation failed
    """
    if not is_valid:
        raise ValidationError(error_message, path=path)
