"""
Loewner-Komatu continuation of annulus maps under moving slit tips.

A stage moves a set of tips (prevertices with interior angle 2*pi) along
prescribed w-plane trajectories for t in [t0, t1]. The accessory parameters
follow the ODE system obtained from F_t / F' = H(z, t), with
H = sum_j L_j K_j(z) and L_j = dE_j/dt / F''(tip_j).
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from matplotlib.path import Path as PolygonPath
from scipy import integrate

from .domain import (
    INNER,
    OUTER,
    SIDES,
    AccessoryState,
    DomainSpec,
    Vertex,
    ccw_angle,
    cyclic_gaps,
    cyclic_order_ok,
    decode_complex,
    find_edge,
    min_gap,
)
from .elliptic import PeriodLattice, dlog_sigma_domega2, weier_p, weier_zeta
from .errors import DegeneracyError, DriftError, MergeError, NumericalError, TopologyError
from .logging_config import get_logger
from .sc_map import (
    Prevertices,
    evolve_state,
    locate_boundary_point,
    make_state,
    second_derivative_from_table,
    shift_representative,
    slit_companions,
)
from .validators import GeometryValidator, ValidationError, cyclic_run, validate_and_raise

logger = get_logger("loewner")

SEED_OFFSET = 1e-12
TIP_ALPHA = 2.0


@dataclass(frozen=True)
class TipTrajectory:
    """
    Polyline of w-plane waypoints traversed over t in [0, 1].

    ``knots`` are the times at which each waypoint is reached; by default they
    are proportional to arc length, so the speed is constant.
    """

    waypoints: Tuple[complex, ...]
    knots: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        points = tuple(complex(w) for w in self.waypoints)
        if len(points) < 2:
            raise ValidationError("A trajectory needs at least two waypoints", path="waypoints")
        lengths = np.abs(np.diff(np.array(points)))
        if self.knots is None:
            total = float(lengths.sum())
            if total == 0:
                knots = tuple(np.linspace(0.0, 1.0, len(points)))
            else:
                knots = tuple(np.concatenate([[0.0], np.cumsum(lengths) / total]))
        else:
            knots = tuple(float(k) for k in self.knots)
            if len(knots) != len(points):
                raise ValidationError("Need one knot per waypoint", path="knots")
            if knots[0] != 0.0 or knots[-1] != 1.0 or np.any(np.diff(knots) <= 0):
                raise ValidationError("Knots must increase from 0 to 1", path="knots")
        object.__setattr__(self, "waypoints", points)
        object.__setattr__(self, "knots", knots)

    @property
    def start(self) -> complex:
        return self.waypoints[0]

    @property
    def end(self) -> complex:
        return self.waypoints[-1]

    def _segment(self, t: float) -> int:
        idx = int(np.searchsorted(self.knots, t, side="right")) - 1
        return min(max(idx, 0), len(self.waypoints) - 2)

    def position(self, t: float) -> complex:
        i = self._segment(t)
        t0, t1 = self.knots[i], self.knots[i + 1]
        s = (t - t0) / (t1 - t0)
        return self.waypoints[i] + s * (self.waypoints[i + 1] - self.waypoints[i])

    def velocity(self, t: float) -> complex:
        i = self._segment(t)
        return (self.waypoints[i + 1] - self.waypoints[i]) / (self.knots[i + 1] - self.knots[i])

    def initial_direction(self) -> complex:
        for a, b in zip(self.waypoints[:-1], self.waypoints[1:]):
            if b != a:
                return (b - a) / abs(b - a)
        raise ValidationError("Trajectory has zero length", path="waypoints")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "waypoints": [[w.real, w.imag] for w in self.waypoints],
            "knots": list(self.knots),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TipTrajectory":
        knots = data.get("knots")
        return cls(
            waypoints=tuple(decode_complex(w) for w in data["waypoints"]),
            knots=tuple(knots) if knots is not None else None,
        )


@dataclass(frozen=True)
class MovingTip:
    """An existing slit end (alpha = 2) and its trajectory."""

    label: str
    trajectory: TipTrajectory


@dataclass(frozen=True)
class SlitSpec:
    """
    A new slit opened at the start of a stage.

    The slit starts at ``trajectory.start``: either at the vertex
    ``base_vertex`` or at an edge point of the ``side`` polyline. Its tip is
    the vertex ``<name>.tip``; the two copies of the base point are
    ``<name>.c1`` and ``<name>.c2`` with exponents phi1 and phi2, computed from
    the slit direction. ``phi`` (edge slits) or ``phi_pair`` (vertex slits)
    are optional checks on those values.
    """

    name: str
    trajectory: TipTrajectory
    side: Optional[str] = None
    base_vertex: Optional[str] = None
    phi: Optional[float] = None
    phi_pair: Optional[Tuple[float, float]] = None

    @property
    def base_point(self) -> complex:
        return self.trajectory.start

    @property
    def labels(self) -> Tuple[str, str, str]:
        return f"{self.name}.c1", f"{self.name}.tip", f"{self.name}.c2"

    @property
    def tip_label(self) -> str:
        return self.labels[1]


@dataclass(frozen=True)
class StageTolerances:
    rtol: float = 1e-10
    atol: float = 1e-10
    edge_window: float = 1e-3
    edge_max_step: float = 1e-5
    drift: float = 1e-7
    min_gap: float = 1e-13

    def to_dict(self) -> Dict[str, float]:
        return {
            "rtol": self.rtol,
            "atol": self.atol,
            "edge_window": self.edge_window,
            "edge_max_step": self.edge_max_step,
            "drift": self.drift,
            "min_gap": self.min_gap,
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, float]]) -> "StageTolerances":
        return cls(**(data or {}))


@dataclass
class StateDerivative:
    """Time derivatives at one (t, state); ``drift`` is the largest relative imaginary residue."""

    z_dot: np.ndarray
    x_dot: np.ndarray
    omega2_dot: complex
    log_c1_dot: complex
    coefficients: Dict[str, complex]
    drift: float

    @property
    def modulus_dot(self) -> float:
        return (self.omega2_dot / (2j * 2.0 * math.pi)).real


@dataclass
class ContinuationDiagnostics:
    """Health record of one integrated stage."""

    times: List[float] = field(default_factory=list)
    omega2: List[float] = field(default_factory=list)
    moduli: List[float] = field(default_factory=list)
    max_drift: float = 0.0
    min_gap: float = math.inf
    accepted_steps: int = 0
    rejected_steps: int = 0
    nfev: int = 0
    escaped_tips: List[str] = field(default_factory=list)

    def record(self, t: float, state: AccessoryState) -> None:
        self.times.append(float(t))
        self.omega2.append(state.omega2.imag)
        self.moduli.append(state.modulus)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_drift": self.max_drift,
            "min_gap": self.min_gap,
            "accepted_steps": self.accepted_steps,
            "rejected_steps": self.rejected_steps,
            "nfev": self.nfev,
            "escaped_tips": list(self.escaped_tips),
            "final_modulus": self.moduli[-1] if self.moduli else None,
        }


# kernels ------------------------------------------------------------------


def villat_kernel(z, z0: complex, lattice: PeriodLattice):
    """K(z) = zeta(z - z0) - (eta1/omega1) z + zeta(z0); vanishes at z = 0."""
    z = np.asarray(z, dtype=complex) if np.ndim(z) else complex(z)
    return (
        weier_zeta(z - z0, lattice)
        - lattice.eta1 / lattice.omega1 * z
        + weier_zeta(complex(z0), lattice)
    )


def _tip_index(spec: DomainSpec, label: str) -> int:
    vertex = spec.vertex(label)
    if abs(vertex.alpha - TIP_ALPHA) > 1e-12:
        raise ValidationError(
            f"Vertex {label!r} has alpha = {vertex.alpha}, a moving tip needs alpha = 2",
            path=label,
        )
    return spec.global_index(label)


def tip_coefficient(tip: MovingTip, state: AccessoryState, spec: DomainSpec, t: float) -> complex:
    """
    L = E'(t) / F''(tip).

    Raises:
        DegeneracyError: If the tip collides with another prevertex or F'' vanishes
    """
    system = LoewnerKomatuSystem(spec, [tip], state.C2)
    return complex(system.coefficients(t, state, Prevertices.of(state, spec))[0])


class LoewnerKomatuSystem:
    """
    ODE right-hand side for a fixed domain topology and a set of moving tips.

    The state vector is [x_outer, x_inner, Im omega2, log|C1|, arg C1]; C2 is
    constant within a stage.
    """

    def __init__(self, spec: DomainSpec, tips: Sequence[MovingTip], C2: complex = 0j):
        labels = [tip.label for tip in tips]
        if len(set(labels)) != len(labels):
            raise ValidationError("A tip is listed twice", path="tips")
        self.spec = spec
        self.tips = list(tips)
        self.tip_indices = np.array([_tip_index(spec, label) for label in labels], dtype=int)
        self.C2 = complex(C2)
        self.size = spec.n_outer + spec.n_inner + 3

    def pack(self, state: AccessoryState) -> np.ndarray:
        return np.concatenate(
            [
                state.x_outer,
                state.x_inner,
                [state.omega2.imag, math.log(abs(state.C1)), np.angle(state.C1)],
            ]
        )

    def unpack(self, y: np.ndarray) -> AccessoryState:
        n_outer = self.spec.n_outer
        n_inner = self.spec.n_inner
        return make_state(
            self.spec,
            x_outer=y[:n_outer],
            x_inner=y[n_outer : n_outer + n_inner],
            omega2=1j * y[-3],
            C1=np.exp(y[-2] + 1j * y[-1]),
            C2=self.C2,
        )

    def coefficients(self, t: float, state: AccessoryState, pv: Prevertices) -> np.ndarray:
        values = np.empty(len(self.tips), dtype=complex)
        for a, (tip, index) in enumerate(zip(self.tips, self.tip_indices)):
            f2 = second_derivative_from_table(index, pv, state.lattice, state.C1, state.c)
            if abs(f2) < 1e-14:
                raise DegeneracyError(
                    f"Second derivative vanishes at tip {tip.label}", details={"F2": f2}
                )
            values[a] = tip.trajectory.velocity(t) / f2
        return values

    def derivative(self, t: float, state: AccessoryState) -> StateDerivative:
        spec = self.spec
        lat = state.lattice
        pv = Prevertices.of(state, spec)
        n = len(pv.z)
        n_outer = spec.n_outer
        coeff = self.coefficients(t, state, pv)

        kernels = np.zeros((len(self.tips), n), dtype=complex)
        for a, j in enumerate(self.tip_indices):
            others = np.arange(n) != j
            kernels[a, others] = villat_kernel(pv.z[others], pv.z[j], lat)
        z_dot = -(coeff @ kernels)

        ratio = lat.eta1 / lat.omega1
        for a, j in enumerate(self.tip_indices):
            zj = pv.z[j]
            # The tip's own slit factor (tip and both base copies) stays out of the bracket.
            others = (np.arange(n) != j) & ~slit_companions(j, pv.labels)
            cross = coeff @ kernels[:, j] - coeff[a] * kernels[a, j]
            bracket = (
                weier_zeta(zj, lat)
                - ratio * zj
                + state.c
                + pv.beta[others] @ weier_zeta(zj - pv.z[others], lat)
            )
            z_dot[j] = -cross - coeff[a] * bracket

        total = complex(coeff.sum())
        omega2_dot = 1j * total
        x_dot = z_dot.copy()
        x_dot[n_outer:] -= omega2_dot / 2.0
        width_dot = total

        drift_values = np.append(x_dot, width_dot)
        drift = float(np.max(np.abs(drift_values.imag) / (1.0 + np.abs(drift_values)))) if n else 0.0

        # C1 equation uses the real projections of the velocities.
        omega2_real = 1j * width_dot.real
        z_real = x_dot.real.astype(complex)
        z_real[n_outer:] += omega2_real / 2.0
        r_terms = weier_zeta(pv.z, lat) * z_real + omega2_real * dlog_sigma_domega2(pv.z, lat)
        p_terms = weier_p(pv.z[self.tip_indices], lat) + ratio if len(self.tips) else np.zeros(0)
        log_c1_dot = -(pv.beta @ r_terms + coeff @ p_terms)

        return StateDerivative(
            z_dot=z_dot,
            x_dot=x_dot,
            omega2_dot=omega2_dot,
            log_c1_dot=complex(log_c1_dot),
            coefficients={tip.label: complex(c) for tip, c in zip(self.tips, coeff)},
            drift=drift,
        )

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        """Real right-hand side for the integrator; NaN on failure so the step is rejected."""
        try:
            d = self.derivative(t, self.unpack(y))
        except NumericalError as exc:
            logger.debug(f"Right-hand side failed at t={t:.6g}: {exc}")
            return np.full(self.size, np.nan)
        return np.concatenate(
            [d.x_dot.real, [(-1j * d.omega2_dot).real, d.log_c1_dot.real, d.log_c1_dot.imag]]
        )


def ode_rhs(
    t: float, state: AccessoryState, spec: DomainSpec, tips: Sequence[MovingTip]
) -> StateDerivative:
    """Derivative of every accessory parameter at time t."""
    return LoewnerKomatuSystem(spec, tips, state.C2).derivative(t, state)


def evolution_field(
    z, state: AccessoryState, spec: DomainSpec, tips: Sequence[MovingTip], t: float
):
    """H(z, t) = sum_j L_j K_j(z)."""
    system = LoewnerKomatuSystem(spec, tips, state.C2)
    pv = Prevertices.of(state, spec)
    coeff = system.coefficients(t, state, pv)
    z = np.asarray(z, dtype=complex)
    total = np.zeros(z.shape, dtype=complex)
    for a, j in enumerate(system.tip_indices):
        total = total + coeff[a] * villat_kernel(z, pv.z[j], state.lattice)
    return total if total.ndim else complex(total)


# slit opening -------------------------------------------------------------


def slit_angles(d_prev: complex, d_next: complex, direction: complex, side: str) -> Tuple[float, float]:
    """Exponents (phi1, phi2) of the two copies of the base point of a new slit."""
    if side == OUTER:
        phi1 = ccw_angle(direction, d_prev)
        phi2 = ccw_angle(d_next, direction)
    else:
        phi1 = ccw_angle(d_prev, direction)
        phi2 = ccw_angle(direction, d_next)
    return phi1 / math.pi, phi2 / math.pi


@dataclass(frozen=True)
class SlitPlacement:
    """Position of a new slit's vertex triple in its polyline."""

    side: str
    spec: DomainSpec
    insert_at: int
    replaces_base: bool
    phi1: float
    phi2: float


def place_slit(spec: DomainSpec, slit: SlitSpec) -> SlitPlacement:
    """
    Insert the labels (c1, tip, c2) of a new slit into the domain.

    Only the geometry is used, so configs can be checked before any map is solved.

    Raises:
        ValidationError: If the base point is not a vertex or an edge point, or the
            slit angles do not add up
    """
    w = slit.base_point
    scale = max(spec.diameter(), 1.0)
    path = f"slits[{slit.name}]"
    if slit.base_vertex is not None:
        try:
            side, i = spec.locate(slit.base_vertex)
        except KeyError:
            raise ValidationError(f"Unknown base vertex {slit.base_vertex!r}", path=path)
        verts = list(spec.side_vertices(side))
        base = verts[i]
        if abs(base.w - w) > 1e-9 * scale:
            raise ValidationError(
                f"Slit starts at {w}, but vertex {base.label} is at {base.w}", path=path
            )
        w_prev, w_next = verts[i - 1].w, verts[(i + 1) % len(verts)].w
        total = base.alpha
        del verts[i]
        insert_at = i
    else:
        side = slit.side
        if side not in SIDES:
            raise ValidationError(f"Slit side must be outer or inner, got {side!r}", path=path)
        i = find_edge(spec, side, w)
        if i is None:
            raise ValidationError(f"Point {w} is not inside an edge of the {side} polyline", path=path)
        verts = list(spec.side_vertices(side))
        w_prev, w_next = verts[i].w, verts[(i + 1) % len(verts)].w
        total = 1.0
        insert_at = i + 1

    phi1, phi2 = slit_angles(w_prev - w, w_next - w, slit.trajectory.initial_direction(), side)
    validate_and_raise(*GeometryValidator.validate_slit_angles(phi1, phi2, total), path=path)
    if slit.phi is not None and abs(slit.phi - phi1) > 1e-9:
        raise ValidationError(
            f"phi = {slit.phi} does not match the slit direction (phi1 = {phi1:.12g})",
            path=f"{path}.phi",
        )
    if slit.phi_pair is not None and max(
        abs(slit.phi_pair[0] - phi1), abs(slit.phi_pair[1] - phi2)
    ) > 1e-9:
        raise ValidationError(
            f"phi pair {slit.phi_pair} does not match the slit direction "
            f"({phi1:.12g}, {phi2:.12g})",
            path=f"{path}.phi1",
        )

    c1, tip, c2 = slit.labels
    verts[insert_at:insert_at] = [Vertex(c1, w, phi1), Vertex(tip, w, TIP_ALPHA), Vertex(c2, w, phi2)]
    return SlitPlacement(
        side=side,
        spec=spec.with_side(side, verts),
        insert_at=insert_at,
        replaces_base=slit.base_vertex is not None,
        phi1=phi1,
        phi2=phi2,
    )


def open_slit(
    state: AccessoryState, spec: DomainSpec, slit: SlitSpec, seed: float = SEED_OFFSET
) -> Tuple[AccessoryState, DomainSpec, MovingTip]:
    """
    Insert the degenerate triple (c1, tip, c2) for a new slit.

    The three prevertices start at x - seed, x, x + seed, where x is the
    prevertex of the base point.
    """
    placement = place_slit(spec, slit)
    side = placement.side
    if slit.base_vertex is not None:
        x = state.x_of(spec, slit.base_vertex)
    else:
        x, _ = locate_boundary_point(state, spec, side, slit.base_point)

    xs = list(state.x_outer if side == OUTER else state.x_inner)
    at = placement.insert_at
    if placement.replaces_base:
        del xs[at]
    xs[at:at] = [x - seed, x, x + seed]
    key = "x_outer" if side == OUTER else "x_inner"
    new_state = evolve_state(state, placement.spec, **{key: xs})
    logger.info(
        f"Opened slit {slit.name} on the {side} boundary at {slit.base_point} "
        f"(phi1={placement.phi1:.6g}, phi2={placement.phi2:.6g})"
    )
    return new_state, placement.spec, MovingTip(slit.tip_label, slit.trajectory)


# stage integration --------------------------------------------------------


def _sub_spans(t0: float, t1: float, tol: StageTolerances) -> List[Tuple[float, float, float]]:
    window = tol.edge_window
    if t1 - t0 <= 2.0 * window:
        return [(t0, t1, tol.edge_max_step)]
    return [
        (t0, t0 + window, tol.edge_max_step),
        (t0 + window, t1 - window, np.inf),
        (t1 - window, t1, tol.edge_max_step),
    ]


def _check_step(
    system: LoewnerKomatuSystem,
    t: float,
    state: AccessoryState,
    last_good: AccessoryState,
    tol: StageTolerances,
    diagnostics: ContinuationDiagnostics,
) -> None:
    for side, xs in ((OUTER, state.x_outer), (INNER, state.x_inner)):
        if len(xs) > 1:
            if not cyclic_order_ok(xs, tol.min_gap):
                raise TopologyError(
                    f"Cyclic order of the {side} prevertices changed at t={t:.6g}",
                    state=last_good,
                    details={"t": t, "gaps": cyclic_gaps(xs).tolist()},
                )
            diagnostics.min_gap = min(diagnostics.min_gap, min_gap(xs))
    d = system.derivative(t, state)
    diagnostics.max_drift = max(diagnostics.max_drift, d.drift)
    if d.drift > tol.drift:
        raise DriftError(
            f"Imaginary drift {d.drift:.3g} exceeds {tol.drift:.3g} at t={t:.6g}",
            state=last_good,
            details={"t": t},
        )
    if d.drift > 0.01 * tol.drift:
        logger.warning(f"Imaginary drift {d.drift:.3g} at t={t:.6g}")


def _escaped_tips(spec: DomainSpec, tips: Sequence[MovingTip]) -> List[str]:
    outer = spec.points(OUTER)
    polygon = PolygonPath(np.column_stack([outer.real, outer.imag]))
    escaped = []
    for tip in tips:
        w = spec.vertex(tip.label).w
        if not polygon.contains_point((w.real, w.imag)):
            escaped.append(tip.label)
    return escaped


def integrate_stage(
    state: AccessoryState,
    spec: DomainSpec,
    tips: Sequence[MovingTip] = (),
    slits: Sequence[SlitSpec] = (),
    t_span: Tuple[float, float] = (0.0, 1.0),
    tolerances: Optional[StageTolerances] = None,
) -> Tuple[AccessoryState, DomainSpec, ContinuationDiagnostics]:
    """
    Open new slits and integrate the parameter ODEs over ``t_span``.

    Args:
        state: Parameters of the map onto the domain at t0
        spec: Domain at t0
        tips: Existing tips that move during the stage
        slits: New slits, opened at t0
        t_span: (t0, t1), normally (0, 1)
        tolerances: Integrator and health thresholds

    Returns:
        (state, spec, diagnostics) at t1; tip vertices are moved to their end points

    Raises:
        DegeneracyError: If the step size underflows (carries the last good state)
        TopologyError: If prevertices change their cyclic order
        DriftError: If a real-valued right-hand side acquires an imaginary part
    """
    tol = tolerances or StageTolerances()
    t0, t1 = float(t_span[0]), float(t_span[1])
    moving = list(tips)
    for slit in slits:
        state, spec, tip = open_slit(state, spec, slit)
        moving.append(tip)

    diagnostics = ContinuationDiagnostics()
    diagnostics.record(t0, state)
    if t1 <= t0:
        return state, spec, diagnostics

    system = LoewnerKomatuSystem(spec, moving, state.C2)
    system.derivative(t0, state)
    y = system.pack(state)
    last_good = state
    logger.info(
        f"Stage start: {len(moving)} moving tips, t in [{t0}, {t1}], modulus {state.modulus:.12g}"
    )

    for lo, hi, max_step in _sub_spans(t0, t1, tol):
        solver = integrate.RK45(
            system.rhs, lo, y, hi, rtol=tol.rtol, atol=tol.atol, max_step=max_step
        )
        accepted = 0
        while solver.status == "running":
            message = solver.step()
            if solver.status == "failed":
                raise DegeneracyError(
                    f"Integrator failed at t={solver.t:.9g}: {message}",
                    state=last_good,
                    details={"t": solver.t},
                )
            accepted += 1
            current = system.unpack(solver.y)
            _check_step(system, solver.t, current, last_good, tol, diagnostics)
            last_good = current
            diagnostics.record(solver.t, current)
        attempts = max(0, (solver.nfev - 1) // 6)
        diagnostics.accepted_steps += accepted
        diagnostics.rejected_steps += max(0, attempts - accepted)
        diagnostics.nfev += solver.nfev
        y = solver.y

    final = system.unpack(y)
    for tip in moving:
        spec = spec.moved(tip.label, tip.trajectory.position(t1))
    final = evolve_state(final, spec)
    diagnostics.escaped_tips = _escaped_tips(spec, moving)
    for label in diagnostics.escaped_tips:
        logger.warning(f"Tip {label} ended outside the outer polygon")
    logger.info(
        f"Stage end: {diagnostics.accepted_steps} steps, {diagnostics.rejected_steps} rejected, "
        f"modulus {final.modulus:.12g}, max drift {diagnostics.max_drift:.3g}"
    )
    return final, spec, diagnostics


def modulus_trace(diagnostics: ContinuationDiagnostics) -> pd.DataFrame:
    """Modulus at every accepted step, with the omega2 identity residual."""
    omega2 = np.asarray(diagnostics.omega2)
    moduli = np.asarray(diagnostics.moduli)
    return pd.DataFrame(
        {
            "t": diagnostics.times,
            "omega2_im": omega2,
            "modulus": moduli,
            "identity_residual": np.abs(moduli - omega2 / (2.0 * 2.0 * math.pi)),
        }
    )


# merging ------------------------------------------------------------------


@dataclass(frozen=True)
class MergeDirective:
    """Merge a contiguous run of vertices of one polyline into a single vertex."""

    labels: Tuple[str, ...]
    new_label: str
    at: Optional[complex] = None
    tolerance: float = 1e-3

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "labels": list(self.labels),
            "new_label": self.new_label,
            "tolerance": self.tolerance,
        }
        if self.at is not None:
            data["at"] = [self.at.real, self.at.imag]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MergeDirective":
        at = data.get("at")
        return cls(
            labels=tuple(data["labels"]),
            new_label=str(data["new_label"]),
            at=decode_complex(at) if at is not None else None,
            tolerance=float(data.get("tolerance", 1e-3)),
        )


@dataclass(frozen=True)
class MergeReport:
    new_label: str
    spread: float
    x: float
    alpha: float
    # Pre-merge coordinates of the run, on one branch of the cycle
    members: Tuple[float, ...] = ()


@dataclass(frozen=True)
class MergePlan:
    """Label-level effect of one merge: the run it replaces and the resulting domain."""

    side: str
    run: Tuple[int, ...]
    rest: Tuple[int, ...]
    vertex: Vertex
    spec: DomainSpec


def plan_merge(spec: DomainSpec, directive: MergeDirective) -> MergePlan:
    """
    Replace a contiguous run of vertices by one vertex with alpha = sum(alpha_i - 1) + 1.

    The merged vertex is placed at ``directive.at``, else at the first tip of the
    run, else at the mean position. It becomes the first vertex of its polyline,
    followed by the remaining ones in cyclic order.
    """
    path = f"merge[{directive.new_label}]"
    try:
        sides = {spec.locate(label)[0] for label in directive.labels}
    except KeyError as exc:
        raise ValidationError(str(exc.args[0]), path=path)
    if len(sides) != 1:
        raise ValidationError("Merge group spans both polylines", path=path)
    side = sides.pop()
    verts = spec.side_vertices(side)
    indices = [spec.locate(label)[1] for label in directive.labels]
    validate_and_raise(*GeometryValidator.validate_cyclic_group(indices, len(verts)), path=path)
    run = cyclic_run(indices, len(verts))
    if directive.new_label in spec.labels and directive.new_label not in directive.labels:
        raise ValidationError(f"Label {directive.new_label!r} already exists", path=path)

    alpha = sum(verts[i].alpha - 1.0 for i in run) + 1.0
    if directive.at is not None:
        w = directive.at
    else:
        tips = [verts[i].w for i in run if verts[i].alpha == TIP_ALPHA]
        w = tips[0] if tips else complex(np.mean([verts[i].w for i in run]))
    merged = Vertex(directive.new_label, w, alpha)

    members = set(run)
    rest = [(run[-1] + 1 + k) % len(verts) for k in range(len(verts))]
    rest = [i for i in rest if i not in members]
    new_spec = spec.with_side(side, [merged] + [verts[i] for i in rest])
    return MergePlan(side=side, run=tuple(run), rest=tuple(rest), vertex=merged, spec=new_spec)


def _merge_one(
    state: AccessoryState, spec: DomainSpec, directive: MergeDirective
) -> Tuple[AccessoryState, DomainSpec, MergeReport]:
    plan = plan_merge(spec, directive)
    side, run = plan.side, plan.run
    verts = spec.side_vertices(side)

    xs = state.x_outer if side == OUTER else state.x_inner
    anchor = xs[run[0]]
    for i in run[1:]:
        k = int(round((xs[i] - anchor) / (2.0 * math.pi)))
        if k:
            state = shift_representative(state, spec, verts[i].label, k)
        xs = state.x_outer if side == OUTER else state.x_inner
    members = np.array([xs[i] for i in run])
    spread = float(members.max() - members.min())
    if spread > directive.tolerance:
        raise MergeError(
            f"Spread {spread:.3g} of {directive.new_label} exceeds {directive.tolerance:.3g}",
            {"labels": list(directive.labels), "x": members.tolist()},
        )

    mean_x = float(members.mean())
    new_xs = [mean_x] + [float(xs[i]) for i in plan.rest]
    key = "x_outer" if side == OUTER else "x_inner"
    new_state = evolve_state(state, plan.spec, **{key: new_xs})
    return new_state, plan.spec, MergeReport(
        directive.new_label, spread, mean_x, plan.vertex.alpha, tuple(float(x) for x in members)
    )


def merge_tips(
    state: AccessoryState, spec: DomainSpec, directives: Sequence[MergeDirective]
) -> Tuple[AccessoryState, DomainSpec, List[MergeReport]]:
    """
    Replace each group of converged prevertices by their arithmetic mean.

    The merged vertex gets alpha = sum(alpha_i - 1) + 1. C1 is kept; callers
    refresh C2 afterwards.

    Raises:
        MergeError: If a group's spread exceeds its tolerance
        ValidationError: If a group is not a contiguous run of one polyline
    """
    reports = []
    for directive in directives:
        state, spec, report = _merge_one(state, spec, directive)
        logger.info(
            f"Merged {len(directive.labels)} prevertices into {report.new_label} "
            f"(alpha={report.alpha:.6g}, spread={report.spread:.3g})"
        )
        reports.append(report)
    return state, spec, reports
