"""Schwarz-Christoffel maps from the annulus r < |tau| < 1 onto doubly connected polygons.

Points are handled in the strip coordinate z = -i log tau, 0 <= Im z <= |omega2|/2.
The outer polyline is the image of Im z = 0 and the inner one the image of
Im z = |omega2|/2.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .domain import INNER, OUTER, AccessoryState, DomainSpec, find_edge, first_outer_labels
from .elliptic import OMEGA1, PeriodLattice, log_sigma, log_theta1_sided
from .errors import (
    AccuracyError,
    DegeneracyError,
    NumericalError,
    PathError,
    PrevertexProximityError,
)
from .logging_config import get_logger
from .quadrature import DEFAULT_RTOL, QuadratureResult, integrate_segment, integrate_to_singular_end

logger = get_logger("sc_map")

PREVERTEX_TOL = 1e-13
PATH_CLEARANCE = 1e-3
ENDPOINT_MATCH = 1e-10
TIP_COLLISION = 1e-10
SEED_COLLISION = 1e-13
DEGENERATE_TIP = 1e-14


@dataclass(frozen=True)
class MapSample:
    """A point of the strip, its annulus coordinate and its image."""

    z: complex
    tau: complex
    w: complex

    @classmethod
    def at(cls, z: complex, w: complex) -> "MapSample":
        return cls(z=complex(z), tau=complex(np.exp(1j * z)), w=complex(w))


@dataclass(frozen=True)
class Prevertices:
    """Flat view of all prevertices: outer ones first, then inner ones."""

    z: np.ndarray
    x: np.ndarray
    beta: np.ndarray
    upper: np.ndarray
    labels: Tuple[str, ...]

    @classmethod
    def of(cls, state: AccessoryState, spec: DomainSpec) -> "Prevertices":
        return cls(
            z=np.concatenate([state.z_outer, state.z_inner]),
            x=np.concatenate([state.x_outer, state.x_inner]),
            beta=np.concatenate([spec.betas(OUTER), spec.betas(INNER)]),
            upper=np.concatenate(
                [np.ones(spec.n_outer, dtype=bool), np.zeros(spec.n_inner, dtype=bool)]
            ),
            labels=spec.labels,
        )


def c_value(lattice: PeriodLattice, spec: DomainSpec, x_outer, x_inner) -> complex:
    weighted = float(np.dot(spec.betas(OUTER), x_outer) + np.dot(spec.betas(INNER), x_inner))
    return lattice.eta1 / lattice.omega1 * weighted + lattice.eta2


def compute_c(state: AccessoryState, spec: DomainSpec) -> complex:
    """
    Constant c making the integrand omega1-periodic.

    Args:
        state: Accessory parameters
        spec: Domain with vertex exponents

    Returns:
        c = (eta1/omega1) * sum((alpha-1) * x) + eta2 over both boundary lines
    """
    return c_value(state.lattice, spec, state.x_outer, state.x_inner)


def make_state(
    spec: DomainSpec,
    x_outer: Sequence[float],
    x_inner: Sequence[float],
    omega2: complex,
    C1: complex = 1.0,
    C2: complex = 0.0,
) -> AccessoryState:
    """Build a state with a coherent ``c``."""
    if len(x_outer) != spec.n_outer or len(x_inner) != spec.n_inner:
        raise ValueError(
            f"Prevertex counts ({len(x_outer)}, {len(x_inner)}) do not match "
            f"the domain ({spec.n_outer}, {spec.n_inner})"
        )
    state = AccessoryState(x_outer=x_outer, x_inner=x_inner, omega2=omega2, C1=C1, C2=C2)
    return replace(state, c=compute_c(state, spec))


def evolve_state(state: AccessoryState, spec: DomainSpec, **changes) -> AccessoryState:
    """Copy of ``state`` with ``changes`` applied and ``c`` recomputed."""
    fields = {
        "x_outer": state.x_outer,
        "x_inner": state.x_inner,
        "omega2": state.omega2,
        "C1": state.C1,
        "C2": state.C2,
    }
    fields.update(changes)
    return make_state(spec, **fields)


def _wrapped(dx: np.ndarray) -> np.ndarray:
    return (dx + math.pi) % OMEGA1 - math.pi


class SchwarzChristoffelMap:
    """
    Evaluator for one (state, domain) pair.

    The integrand is used in theta form,
    exp((eta2 - eta1*omega2/omega1) * xi) * prod theta1(pi (xi - z_v)/omega1)^(alpha_v - 1),
    with each factor on the branch continuous over the closed strip. The
    sigma-form constant C1 relates to the theta-form one by
    C1_theta = C1 * exp(eta1/(2 omega1) * sum((alpha_v - 1) z_v^2)).
    """

    def __init__(
        self,
        state: AccessoryState,
        spec: DomainSpec,
        rtol: float = DEFAULT_RTOL,
        clearance: float = PATH_CLEARANCE,
    ):
        self.state = state
        self.spec = spec
        self.lattice = state.lattice
        self.prevertices = Prevertices.of(state, spec)
        self.rtol = rtol
        self.clearance = clearance
        lat = self.lattice
        self.linear = lat.eta2 - lat.eta1 * lat.omega2 / lat.omega1
        pv = self.prevertices
        self.log_offset = complex(lat.eta1 / (2.0 * lat.omega1) * np.sum(pv.beta * pv.z ** 2))
        self.C1_theta = state.C1 * np.exp(self.log_offset)

    # integrand ---------------------------------------------------------

    def _check_proximity(self, xi: np.ndarray) -> None:
        pv = self.prevertices
        d = xi[..., None] - pv.z
        d = _wrapped(d.real) + 1j * d.imag
        if np.any(np.abs(d) < PREVERTEX_TOL):
            raise PrevertexProximityError(
                "Integrand evaluated at a prevertex", {"xi": complex(np.ravel(xi)[0])}
            )

    def log_integrand(self, xi, check: bool = True):
        xi = np.asarray(xi, dtype=complex)
        if check:
            self._check_proximity(xi)
        pv = self.prevertices
        v = math.pi * (xi[..., None] - pv.z) / self.lattice.omega1
        logs = log_theta1_sided(v, self.lattice, pv.upper)
        return self.linear * xi + logs @ pv.beta

    def log_integrand_sigma(self, xi, check: bool = True):
        xi = np.asarray(xi, dtype=complex)
        if check:
            self._check_proximity(xi)
        pv = self.prevertices
        logs = log_sigma(xi[..., None] - pv.z, self.lattice, side=pv.upper)
        return self.state.c * xi + logs @ pv.beta

    def integrand(self, xi):
        return np.exp(self.log_integrand(xi, check=False))

    def derivative(self, xi):
        """F'(xi) = C1 * exp(sigma-form log integrand)."""
        return self.state.C1 * np.exp(self.log_integrand_sigma(xi))

    # paths -------------------------------------------------------------

    def _endpoint_exponent(self, point: complex) -> Optional[float]:
        pv = self.prevertices
        d = point - pv.z
        d = _wrapped(d.real) + 1j * d.imag
        hits = np.abs(d) < ENDPOINT_MATCH
        if not np.any(hits):
            return None
        beta = float(pv.beta[hits].sum())
        if abs(beta - round(beta)) < 1e-12 and beta >= 0:
            return None
        return beta

    def _check_clearance(self, a: complex, b: complex) -> None:
        if self.clearance <= 0:
            return
        pv = self.prevertices
        seg = b - a
        length2 = abs(seg) ** 2
        for z in pv.z:
            for shift in (-OMEGA1, 0.0, OMEGA1):
                p = z + shift
                if abs(p - a) < ENDPOINT_MATCH or abs(p - b) < ENDPOINT_MATCH:
                    continue
                s = 0.0 if length2 == 0 else ((p - a) * seg.conjugate()).real / length2
                s = min(1.0, max(0.0, s))
                dist = abs(a + s * seg - p)
                if dist < self.clearance:
                    raise PathError(
                        f"Path segment passes within {dist:.3g} of a prevertex",
                        {"segment": (a, b), "prevertex": complex(z)},
                    )

    def segment(self, a: complex, b: complex) -> QuadratureResult:
        """Integral of the theta-form integrand along [a, b]."""
        a, b = complex(a), complex(b)
        if a == b:
            return QuadratureResult(0j, 0.0, 0)
        self._check_clearance(a, b)
        end_beta = self._endpoint_exponent(b)
        start_beta = self._endpoint_exponent(a)
        if end_beta is not None and start_beta is not None:
            mid = 0.5 * (a + b)
            first = self.segment(a, mid)
            second = self.segment(mid, b)
            return QuadratureResult(
                first.value + second.value, first.error + second.error, first.panels + second.panels
            )
        if end_beta is not None:
            return integrate_to_singular_end(self.integrand, a, b, end_beta, rtol=self.rtol)
        if start_beta is not None:
            res = integrate_to_singular_end(self.integrand, b, a, start_beta, rtol=self.rtol)
            return QuadratureResult(-res.value, res.error, res.panels)
        return integrate_segment(self.integrand, a, b, rtol=self.rtol)

    def path(self, z: complex) -> List[complex]:
        """Route 0 -> z: up to the midline, along it, then straight to z."""
        z = complex(z)
        if z == 0:
            return [0j]
        if z.real == 0:
            return [0j, z]
        mid = 0.5j * self.lattice.half_height
        points = [0j, mid, z.real + mid, z]
        out = [points[0]]
        for p in points[1:]:
            if p != out[-1]:
                out.append(p)
        return out

    def raw_integral(self, z: complex) -> QuadratureResult:
        """Integral of the theta-form integrand from 0 to z (C1 = 1, C2 = 0)."""
        pts = self.path(z)
        total, error, panels = 0j, 0.0, 0
        for a, b in zip(pts[:-1], pts[1:]):
            res = self.segment(a, b)
            total += res.value
            error += res.error
            panels += res.panels
        return QuadratureResult(total, error, panels)

    def __call__(self, z: complex) -> complex:
        return self.state.C2 + self.C1_theta * self.raw_integral(z).value

    def evaluate(self, z: complex) -> Tuple[complex, float]:
        res = self.raw_integral(z)
        return self.state.C2 + self.C1_theta * res.value, abs(self.C1_theta) * res.error


# public operations -------------------------------------------------------------


def log_integrand(xi, state: AccessoryState, spec: DomainSpec):
    """Theta-form log integrand (Im xi in [0, |omega2|/2])."""
    return SchwarzChristoffelMap(state, spec).log_integrand(xi)


def log_integrand_sigma(xi, state: AccessoryState, spec: DomainSpec):
    """Sigma-form log integrand; its exponential times C1 is F'(xi)."""
    return SchwarzChristoffelMap(state, spec).log_integrand_sigma(xi)


def map_derivative(xi, state: AccessoryState, spec: DomainSpec):
    return SchwarzChristoffelMap(state, spec).derivative(xi)


def eval_map(
    z: complex,
    state: AccessoryState,
    spec: DomainSpec,
    rtol: float = DEFAULT_RTOL,
    clearance: float = PATH_CLEARANCE,
) -> complex:
    """
    Image F(z) of a strip point.

    Args:
        z: Point with 0 <= Im z <= |omega2|/2
        state: Accessory parameters
        spec: Domain
        rtol: Relative quadrature tolerance
        clearance: Minimum distance of the path from non-endpoint prevertices

    Returns:
        F(z) = C1 * int_0^z F'/C1 + C2
    """
    return SchwarzChristoffelMap(state, spec, rtol=rtol, clearance=clearance)(z)


def second_derivative_at_tip(label: str, state: AccessoryState, spec: DomainSpec) -> complex:
    """
    F'' at the prevertex of a slit tip (exponent alpha - 1 = 1).

    The integrand near the tip is F''(z_t) (xi - z_t), so F''(z_t) is the
    integrand with the tip factor removed, evaluated at z_t.
    """
    vertex = spec.vertex(label)
    if abs(vertex.beta - 1.0) > 1e-12:
        raise ValueError(f"Vertex {label!r} is not a slit tip (alpha = {vertex.alpha})")
    pv = Prevertices.of(state, spec)
    t = spec.global_index(label)
    return second_derivative_from_table(t, pv, state.lattice, state.C1, state.c)


def slit_companions(t: int, labels: Sequence[str]) -> np.ndarray:
    """Mask of the base-point copies (<slit>.c1, <slit>.c2) belonging to tip t."""
    stem = labels[t].rsplit(".", 1)[0] if labels[t].endswith(".tip") else None
    return np.array([stem is not None and lab in (f"{stem}.c1", f"{stem}.c2") for lab in labels])


def second_derivative_from_table(
    t: int, pv: Prevertices, lattice: PeriodLattice, C1: complex, c: complex
) -> complex:
    """F'' at prevertex t from the closed-form product over the other prevertices."""
    others = np.arange(len(pv.z)) != t
    diff = pv.z[t] - pv.z[others]
    dist = np.abs(_wrapped(diff.real) + 1j * diff.imag)
    limit = np.where(slit_companions(t, pv.labels)[others], SEED_COLLISION, TIP_COLLISION)
    if np.any(dist < limit):
        raise DegeneracyError(
            "Slit tip collides with another prevertex", details={"tip": pv.labels[t]}
        )
    logs = log_sigma(diff, lattice, side=pv.upper[others])
    value = C1 * np.exp(c * pv.z[t] + logs @ pv.beta[others])
    return complex(value)


@dataclass
class VertexResiduals:
    """Vertex image errors and side-length errors for both polylines."""

    outer: np.ndarray
    inner: np.ndarray
    outer_sides: np.ndarray
    inner_sides: np.ndarray

    @property
    def max_vertex_error(self) -> float:
        vals = np.abs(np.concatenate([self.outer, self.inner]))
        return float(np.nanmax(vals)) if vals.size else 0.0

    @property
    def max_side_error(self) -> float:
        vals = np.abs(np.concatenate([self.outer_sides, self.inner_sides]))
        return float(np.nanmax(vals)) if vals.size else 0.0


def _side_errors(images: np.ndarray, targets: np.ndarray) -> np.ndarray:
    n = len(targets)
    if n < 2:
        return np.zeros(0)
    nxt = np.roll(np.arange(n), -1)
    return np.abs(images[nxt] - images) - np.abs(targets[nxt] - targets)


def vertex_residuals(state: AccessoryState, spec: DomainSpec, rtol: float = DEFAULT_RTOL) -> VertexResiduals:
    """
    Compare F at every prevertex with its target vertex.

    Vertices that cannot be reached (e.g. freshly split slit triples) are
    reported as NaN.
    """
    fmap = SchwarzChristoffelMap(state, spec, rtol=rtol)
    images = {}
    for side, zs in ((OUTER, state.z_outer), (INNER, state.z_inner)):
        vals = np.empty(len(zs), dtype=complex)
        for i, z in enumerate(zs):
            try:
                vals[i] = fmap(z)
            except (PathError, AccuracyError) as exc:
                logger.warning(f"Vertex {spec.side_vertices(side)[i].label} not evaluated: {exc}")
                vals[i] = complex(np.nan, np.nan)
        images[side] = vals
    outer_t, inner_t = spec.points(OUTER), spec.points(INNER)
    return VertexResiduals(
        outer=images[OUTER] - outer_t,
        inner=images[INNER] - inner_t,
        outer_sides=_side_errors(images[OUTER], outer_t),
        inner_sides=_side_errors(images[INNER], inner_t),
    )


def fix_frame(
    state: AccessoryState, spec: DomainSpec, anchors: Optional[Tuple[str, str]] = None
) -> AccessoryState:
    """
    Choose C1 and C2 so two anchor vertices (default: the first two outer ones) are hit.
    """
    a_label, b_label = anchors or first_outer_labels(spec)
    unit = replace(state, C1=1.0, C2=0.0)
    fmap = SchwarzChristoffelMap(unit, spec)
    ia = fmap.raw_integral(state.z_of(spec, a_label)).value
    ib = fmap.raw_integral(state.z_of(spec, b_label)).value
    wa, wb = spec.vertex(a_label).w, spec.vertex(b_label).w
    c1_theta = (wb - wa) / (ib - ia)
    return replace(state, C1=c1_theta / np.exp(fmap.log_offset), C2=wa - c1_theta * ia)


def refresh_c2(state: AccessoryState, spec: DomainSpec, anchor: Optional[str] = None) -> Tuple[AccessoryState, complex]:
    """Re-derive C2 from one anchor vertex, keeping C1; returns (state, change in C2)."""
    label = anchor or spec.outer[0].label
    fmap = SchwarzChristoffelMap(replace(state, C2=0.0), spec)
    new_c2 = spec.vertex(label).w - fmap(state.z_of(spec, label))
    return replace(state, C2=new_c2), new_c2 - state.C2


def transform_frame(
    state: AccessoryState, spec: DomainSpec, scale: complex, offset: complex
) -> Tuple[AccessoryState, DomainSpec]:
    """Apply w -> scale * w + offset to the domain and the map constants."""
    if scale == 0:
        raise ValueError("Frame scale must be non-zero")
    moved = spec.transformed(scale, offset)
    return replace(state, C1=scale * state.C1, C2=scale * state.C2 + offset), moved


def shift_representative(state: AccessoryState, spec: DomainSpec, label: str, k: int) -> AccessoryState:
    """
    Replace a prevertex x by x - k*omega1 and adjust C1 so the map is unchanged.

    Shifting changes c by -(alpha-1) k eta1; C1 absorbs the quasi-periodicity
    factor of the sigma function on the prevertex's branch.
    """
    if k == 0:
        return state
    side, i = spec.locate(label)
    beta = spec.side_vertices(side)[i].beta
    lat = state.lattice
    z_old = state.z_of(spec, label)
    sign = -1.0 if side == OUTER else 1.0
    log_factor = beta * (
        -k * lat.eta1 * z_old + lat.eta1 * k * k * lat.omega1 / 2.0 + sign * 1j * math.pi * k
    )
    x_outer = np.array(state.x_outer)
    x_inner = np.array(state.x_inner)
    if side == OUTER:
        x_outer[i] -= k * OMEGA1
    else:
        x_inner[i] -= k * OMEGA1
    return evolve_state(
        state, spec, x_outer=x_outer, x_inner=x_inner, C1=state.C1 * np.exp(-log_factor)
    )


def locate_boundary_point(
    state: AccessoryState, spec: DomainSpec, side: str, w: complex, tol: float = 1e-9
) -> Tuple[float, int]:
    """
    Prevertex coordinate of a point lying on an edge of one polyline.

    Returns:
        (x, i) where the point lies on the edge from vertex i to vertex i+1
    """
    i = find_edge(spec, side, w, tol)
    if i is None:
        raise PathError(f"Point {w} does not lie on an edge of the {side} polyline")
    verts = spec.side_vertices(side)
    xs = state.x_outer if side == OUTER else state.x_inner
    n = len(verts)
    wa, wb = verts[i].w, verts[(i + 1) % n].w
    xa = xs[i]
    xb = xs[(i + 1) % n]
    if xb <= xa:
        xb += OMEGA1
    shift = 0j if side == OUTER else state.omega2 / 2.0
    fmap = SchwarzChristoffelMap(state, spec, clearance=0.0)
    target = abs(w - wa)

    def gap(x):
        if x <= xa:
            return -target
        if x >= xb:
            return abs(wb - wa) - target
        return abs(fmap(x + shift) - wa) - target

    x = optimize.brentq(gap, xa, xb, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    return float(x), i


def boundary_samples(state: AccessoryState, spec: DomainSpec, n: int = 25) -> List[MapSample]:
    """Images of n points on each boundary line, kept away from prevertices."""
    fmap = SchwarzChristoffelMap(state, spec)
    samples = []
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    for side, shift, xs in (
        (OUTER, 0j, state.x_outer),
        (INNER, state.omega2 / 2.0, state.x_inner),
    ):
        for k in range(n):
            x = OMEGA1 * ((k + golden) / n)
            if np.min(np.abs(_wrapped(x - xs))) < 2 * PATH_CLEARANCE:
                continue
            z = x + shift
            samples.append(MapSample.at(z, fmap(z)))
    return samples


@dataclass
class GridImage:
    """Images of the circles |tau| = r_j and rays arg tau = theta_k."""

    radii: np.ndarray
    angles: np.ndarray
    circles: List[np.ndarray]
    rays: List[np.ndarray]

    @property
    def polylines(self) -> List[np.ndarray]:
        return list(self.circles) + list(self.rays)

    @property
    def gaps(self) -> int:
        return int(sum(np.isnan(p.real).sum() for p in self.polylines))


def _trace_curve(
    fmap: SchwarzChristoffelMap, start: complex, end: complex, initial: int, max_gap: float
) -> np.ndarray:
    """Adaptively sample F along the straight strip segment [start, end]."""
    params = list(np.linspace(0.0, 1.0, initial + 1))
    images = {}

    def point(s):
        return start + (end - start) * s

    try:
        images[0.0] = fmap(point(0.0))
    except NumericalError as exc:
        logger.debug(f"Grid start point failed: {exc}")
        images[0.0] = complex(np.nan, np.nan)

    def extend(s_from, s_to):
        base = images[s_from]
        try:
            if np.isnan(base.real):
                return fmap(point(s_to))
            return base + fmap.C1_theta * fmap.segment(point(s_from), point(s_to)).value
        except NumericalError as exc:
            logger.debug(f"Grid sample failed: {exc}")
            return complex(np.nan, np.nan)

    for s_prev, s in zip(params[:-1], params[1:]):
        images[s] = extend(s_prev, s)

    for _ in range(12):
        keys = sorted(images)
        inserted = False
        for s_prev, s in zip(keys[:-1], keys[1:]):
            a, b = images[s_prev], images[s]
            if np.isnan(a.real) or np.isnan(b.real) or abs(b - a) <= max_gap:
                continue
            mid = 0.5 * (s_prev + s)
            images[mid] = extend(s_prev, mid)
            inserted = True
        if not inserted:
            break
    keys = sorted(images)
    return np.array([images[s] for s in keys], dtype=complex)


def grid_image(
    state: AccessoryState,
    spec: DomainSpec,
    n_radii: int,
    n_rays: int,
    gap_fraction: float = 0.01,
    max_workers: int = 4,
) -> GridImage:
    """
    Images of a polar grid of the annulus.

    Args:
        state: Accessory parameters
        spec: Domain
        n_radii: Number of circles, radii geometrically spaced in (r, 1)
        n_rays: Number of equally spaced rays
        gap_fraction: Maximum distance of consecutive image points relative to the diameter
        max_workers: Threads used to trace curves

    Returns:
        GridImage with one polyline per circle and per ray
    """
    if n_radii < 1 or n_rays < 1:
        raise ValueError("n_radii and n_rays must be at least 1")
    fmap = SchwarzChristoffelMap(state, spec, clearance=0.0)
    height = state.lattice.half_height
    max_gap = gap_fraction * spec.diameter()
    heights = height * np.arange(1, n_radii + 1) / (n_radii + 1)
    radii = np.exp(-heights)
    angles = OMEGA1 * np.arange(n_rays) / n_rays

    jobs = [(1j * y, OMEGA1 + 1j * y, 48) for y in heights]
    jobs += [(complex(theta), theta + 1j * height, 16) for theta in angles]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        curves = list(executor.map(lambda job: _trace_curve(fmap, job[0], job[1], job[2], max_gap), jobs))
    return GridImage(radii=radii, angles=angles, circles=curves[:n_radii], rays=curves[n_radii:])


def boundary_polyline(spec: DomainSpec, side: str) -> np.ndarray:
    """Closed vertex polyline of one boundary component."""
    pts = spec.points(side)
    return np.append(pts, pts[:1])


def distance_to_polyline(w: complex, polyline: Iterable[complex]) -> float:
    pts = np.asarray(list(polyline), dtype=complex)
    a, b = pts[:-1], pts[1:]
    seg = b - a
    len2 = np.abs(seg) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(len2 > 0, ((w - a) * seg.conjugate()).real / len2, 0.0)
    s = np.clip(s, 0.0, 1.0)
    return float(np.min(np.abs(a + s * seg - w)))


def canonicalize(state: AccessoryState, spec: DomainSpec) -> AccessoryState:
    """Move every prevertex to its representative in [0, omega1), adjusting C1 and c exactly."""
    for label in spec.labels:
        k = math.floor(state.x_of(spec, label) / OMEGA1)
        state = shift_representative(state, spec, label, k)
    return state
