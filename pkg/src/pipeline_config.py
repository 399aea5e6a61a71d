"""Pipeline configuration: JSON schema, dataclasses and cross-stage checks."""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from jsonschema import Draft7Validator
from jsonschema.exceptions import best_match

from .domain import OUTER, DomainSpec, decode_complex, encode_complex
from .logging_config import get_logger
from .loewner import (
    TIP_ALPHA,
    MergeDirective,
    MovingTip,
    SlitSpec,
    StageTolerances,
    TipTrajectory,
    place_slit,
    plan_merge,
)
from .rect_slit import BETA_METHODS, RectSlitInput, rect_slit_domain
from .storage import load_state_dump
from .validators import GeometryValidator, ValidationError

logger = get_logger("pipeline_config")

REFERENCE_SOURCES = ("this-method", "cited")

_COMPLEX = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_WAYPOINTS = {"type": "array", "items": _COMPLEX, "minItems": 2}
_KNOTS = {"type": "array", "items": {"type": "number"}, "minItems": 2}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

PIPELINE_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "ringmap pipeline",
    "type": "object",
    "required": ["init"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "descriptor": {"type": "object", "additionalProperties": {"type": "number"}},
        "init": {
            "type": "object",
            "additionalProperties": False,
            "oneOf": [{"required": ["rect_slit"]}, {"required": ["state_file"]}],
            "properties": {
                "rect_slit": {
                    "type": "object",
                    "required": ["a1", "a2", "b"],
                    "additionalProperties": False,
                    "properties": {
                        "a1": {"type": "number"},
                        "a2": {"type": "number"},
                        "b": _POSITIVE,
                        "beta_method": {"enum": list(BETA_METHODS)},
                        "frame": {
                            "type": "object",
                            "required": ["scale", "offset"],
                            "additionalProperties": False,
                            "properties": {"scale": _COMPLEX, "offset": _COMPLEX},
                        },
                    },
                },
                "state_file": {"type": "string", "minLength": 1},
            },
        },
        "stages": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "t_span": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "tips": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["label", "waypoints"],
                            "additionalProperties": False,
                            "properties": {
                                "label": {"type": "string"},
                                "waypoints": _WAYPOINTS,
                                "knots": _KNOTS,
                            },
                        },
                    },
                    "slits": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "waypoints"],
                            "additionalProperties": False,
                            "oneOf": [{"required": ["base_vertex"]}, {"required": ["side"]}],
                            "dependencies": {"phi1": ["phi2"], "phi2": ["phi1"]},
                            "properties": {
                                "name": {"type": "string", "pattern": "^[^.]+$"},
                                "base_vertex": {"type": "string"},
                                "side": {"enum": ["outer", "inner"]},
                                "waypoints": _WAYPOINTS,
                                "knots": _KNOTS,
                                "phi": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                                "phi1": _POSITIVE,
                                "phi2": _POSITIVE,
                            },
                        },
                    },
                    "tolerances": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            name: _POSITIVE
                            for name in (
                                "rtol",
                                "atol",
                                "edge_window",
                                "edge_max_step",
                                "drift",
                                "min_gap",
                            )
                        },
                    },
                    "merges": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["labels", "new_label"],
                            "additionalProperties": False,
                            "properties": {
                                "labels": {
                                    "type": "array",
                                    "items": {"type": "string"},
                                    "minItems": 2,
                                },
                                "new_label": {"type": "string"},
                                "at": _COMPLEX,
                                "tolerance": _POSITIVE,
                            },
                        },
                    },
                },
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "state": {"type": "boolean"},
                "rectangles": {"type": "boolean"},
                "modulus_trace": {"type": "boolean"},
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n_radii": {"type": "integer", "minimum": 1},
                        "n_rays": {"type": "integer", "minimum": 1},
                        "gap_fraction": _POSITIVE,
                        "png": {"type": "boolean"},
                    },
                },
                "compare": {
                    "type": "object",
                    "required": ["reference"],
                    "additionalProperties": False,
                    "properties": {
                        "reference": {"type": "string"},
                        "source": {"enum": list(REFERENCE_SOURCES)},
                    },
                },
            },
        },
    },
}


def format_path(parts: Iterable[Any]) -> str:
    """Render a JSON path as ``stages[1].slits[0].phi1``."""
    text = ""
    for part in parts:
        if isinstance(part, int):
            text += f"[{part}]"
        else:
            text += f".{part}" if text else str(part)
    return text


def validate_schema(data: Dict[str, Any]) -> None:
    """
    Check a raw config against PIPELINE_SCHEMA.

    Raises:
        ValidationError: With the path of the most relevant schema violation
    """
    error = best_match(Draft7Validator(PIPELINE_SCHEMA).iter_errors(data))
    if error is not None:
        raise ValidationError(error.message, path=format_path(error.absolute_path) or "<root>")


def _trajectory_to_dict(trajectory: TipTrajectory) -> Dict[str, Any]:
    return {
        "waypoints": [[w.real, w.imag] for w in trajectory.waypoints],
        "knots": list(trajectory.knots),
    }


def _trajectory_from_dict(data: Dict[str, Any]) -> TipTrajectory:
    return TipTrajectory.from_dict({"waypoints": data["waypoints"], "knots": data.get("knots")})


@dataclass
class InitConfig:
    """Starting map: a solved rectangle with slit or a saved state dump."""

    rect_slit: Optional[RectSlitInput] = None
    beta_method: str = "closed"
    frame: Optional[Tuple[complex, complex]] = None
    state_file: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        if self.rect_slit is None:
            return {"state_file": self.state_file}
        block: Dict[str, Any] = dict(self.rect_slit.to_dict())
        block["beta_method"] = self.beta_method
        if self.frame is not None:
            scale, offset = self.frame
            block["frame"] = {"scale": [scale.real, scale.imag], "offset": [offset.real, offset.imag]}
        return {"rect_slit": block}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "InitConfig":
        if "state_file" in data:
            return cls(state_file=str(data["state_file"]))
        block = data["rect_slit"]
        frame = block.get("frame")
        return cls(
            rect_slit=RectSlitInput.from_dict(block),
            beta_method=block.get("beta_method", "closed"),
            frame=(decode_complex(frame["scale"]), decode_complex(frame["offset"])) if frame else None,
        )


@dataclass
class StageConfig:
    """One continuation stage: moving tips, new slits, tolerances and merges."""

    name: str = ""
    tips: List[MovingTip] = field(default_factory=list)
    slits: List[SlitSpec] = field(default_factory=list)
    t_span: Tuple[float, float] = (0.0, 1.0)
    tolerances: StageTolerances = field(default_factory=StageTolerances)
    merges: List[MergeDirective] = field(default_factory=list)

    @property
    def moving_labels(self) -> List[str]:
        return [tip.label for tip in self.tips] + [slit.tip_label for slit in self.slits]

    def to_dict(self) -> Dict[str, Any]:
        slits = []
        for slit in self.slits:
            item: Dict[str, Any] = {"name": slit.name}
            if slit.base_vertex is not None:
                item["base_vertex"] = slit.base_vertex
            else:
                item["side"] = slit.side
            item.update(_trajectory_to_dict(slit.trajectory))
            if slit.phi is not None:
                item["phi"] = slit.phi
            if slit.phi_pair is not None:
                item["phi1"], item["phi2"] = slit.phi_pair
            slits.append(item)
        return {
            "name": self.name,
            "t_span": list(self.t_span),
            "tips": [
                {"label": tip.label, **_trajectory_to_dict(tip.trajectory)} for tip in self.tips
            ],
            "slits": slits,
            "tolerances": self.tolerances.to_dict(),
            "merges": [merge.to_dict() for merge in self.merges],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StageConfig":
        slits = []
        for item in data.get("slits", []):
            pair = (float(item["phi1"]), float(item["phi2"])) if "phi1" in item else None
            slits.append(
                SlitSpec(
                    name=str(item["name"]),
                    trajectory=_trajectory_from_dict(item),
                    side=item.get("side"),
                    base_vertex=item.get("base_vertex"),
                    phi=float(item["phi"]) if "phi" in item else None,
                    phi_pair=pair,
                )
            )
        t_span = data.get("t_span", [0.0, 1.0])
        return cls(
            name=str(data.get("name", "")),
            tips=[
                MovingTip(str(item["label"]), _trajectory_from_dict(item))
                for item in data.get("tips", [])
            ],
            slits=slits,
            t_span=(float(t_span[0]), float(t_span[1])),
            tolerances=StageTolerances.from_dict(data.get("tolerances")),
            merges=[MergeDirective.from_dict(item) for item in data.get("merges", [])],
        )


@dataclass
class GridOutput:
    n_radii: int = 8
    n_rays: int = 24
    gap_fraction: float = 0.01
    png: bool = False


@dataclass
class CompareOutput:
    reference: str
    source: Optional[str] = None


@dataclass
class OutputConfig:
    """Which artifacts ``run_pipeline`` writes."""

    state: bool = True
    rectangles: bool = False
    modulus_trace: bool = True
    grid: Optional[GridOutput] = None
    compare: Optional[CompareOutput] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "state": self.state,
            "rectangles": self.rectangles,
            "modulus_trace": self.modulus_trace,
        }
        if self.grid is not None:
            data["grid"] = {
                "n_radii": self.grid.n_radii,
                "n_rays": self.grid.n_rays,
                "gap_fraction": self.grid.gap_fraction,
                "png": self.grid.png,
            }
        if self.compare is not None:
            data["compare"] = {"reference": self.compare.reference}
            if self.compare.source is not None:
                data["compare"]["source"] = self.compare.source
        return data

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "OutputConfig":
        data = data or {}
        grid = data.get("grid")
        compare = data.get("compare")
        return cls(
            state=bool(data.get("state", True)),
            rectangles=bool(data.get("rectangles", False)),
            modulus_trace=bool(data.get("modulus_trace", True)),
            grid=GridOutput(**grid) if grid is not None else None,
            compare=CompareOutput(**compare) if compare is not None else None,
        )


@dataclass
class PipelineConfig:
    """Complete pipeline: initial map, ordered stages and outputs."""

    init: InitConfig
    stages: List[StageConfig] = field(default_factory=list)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    name: str = ""
    description: str = ""
    descriptor: Optional[Dict[str, float]] = None
    base_dir: Optional[str] = field(default=None, compare=False)

    def resolve(self, relative: str) -> Path:
        """Paths in a config are relative to the config file."""
        path = Path(relative)
        if path.is_absolute() or self.base_dir is None:
            return path
        return Path(self.base_dir) / path

    def slit_labels(self) -> List[str]:
        """Every vertex label created by the slits of all stages."""
        return [label for stage in self.stages for slit in stage.slits for label in slit.labels]

    def init_domain(self) -> DomainSpec:
        """Domain of the initial map, built without solving it."""
        init = self.init
        if init.rect_slit is not None:
            init.rect_slit.validate()
            spec = rect_slit_domain(init.rect_slit.b, init.rect_slit.a1, init.rect_slit.a2)
            return spec.transformed(*init.frame) if init.frame is not None else spec
        _, spec = load_state_dump(self.resolve(init.state_file))
        return spec

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "init": self.init.to_dict(),
            "stages": [stage.to_dict() for stage in self.stages],
            "outputs": self.outputs.to_dict(),
        }
        if self.descriptor is not None:
            data["descriptor"] = dict(self.descriptor)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Optional[str] = None) -> "PipelineConfig":
        descriptor = data.get("descriptor")
        return cls(
            init=InitConfig.from_dict(data["init"]),
            stages=[StageConfig.from_dict(item) for item in data.get("stages", [])],
            outputs=OutputConfig.from_dict(data.get("outputs")),
            name=str(data.get("name", "")),
            description=str(data.get("description", "")),
            descriptor={k: float(v) for k, v in descriptor.items()} if descriptor else None,
            base_dir=base_dir,
        )

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def _rewrap(exc: ValidationError, prefix: str, local: Optional[str] = None) -> ValidationError:
    path = exc.path or ""
    if local and path.startswith(local):
        path = prefix + path[len(local):]
    elif path:
        path = f"{prefix}.{path}"
    else:
        path = prefix
    return ValidationError(exc.message, path=path)


def check_domain(spec: DomainSpec, path: str) -> None:
    """Angle sums, label uniqueness and nesting of the two polylines."""
    try:
        spec.validate()
    except ValidationError as exc:
        raise _rewrap(exc, path, "domain")
    is_valid, message = GeometryValidator.validate_nesting(
        spec.points(OUTER).tolist(), [v.w for v in spec.inner]
    )
    if not is_valid:
        raise ValidationError(message, path=f"{path}.inner")


def simulate_topology(config: PipelineConfig, spec: DomainSpec) -> List[DomainSpec]:
    """
    Replay every stage on vertex labels only and return the post-merge domains.

    Raises:
        ValidationError: If a tip or base vertex does not exist where a stage expects
            it, slit angles do not add up, or a merge group is not contiguous
    """
    check_domain(spec, "init.domain")
    domains = []
    for k, stage in enumerate(config.stages):
        path = f"stages[{k}]"
        scale = max(spec.diameter(), 1.0)
        labels = stage.moving_labels
        if len(set(labels)) != len(labels):
            raise ValidationError("A tip moves twice in one stage", path=f"{path}.tips")
        if stage.t_span[1] < stage.t_span[0]:
            raise ValidationError("t_span must not decrease", path=f"{path}.t_span")
        for j, tip in enumerate(stage.tips):
            tip_path = f"{path}.tips[{j}]"
            try:
                vertex = spec.vertex(tip.label)
            except KeyError:
                raise ValidationError(f"No vertex labelled {tip.label!r}", path=tip_path)
            if abs(vertex.alpha - TIP_ALPHA) > 1e-12:
                raise ValidationError(
                    f"Vertex {tip.label!r} has alpha = {vertex.alpha}, a moving tip needs alpha = 2",
                    path=tip_path,
                )
            if abs(vertex.w - tip.trajectory.start) > 1e-9 * scale:
                raise ValidationError(
                    f"Trajectory starts at {tip.trajectory.start}, vertex is at {vertex.w}",
                    path=f"{tip_path}.waypoints",
                )
        for j, slit in enumerate(stage.slits):
            try:
                spec = place_slit(spec, slit).spec
            except ValidationError as exc:
                raise _rewrap(exc, f"{path}.slits[{j}]", f"slits[{slit.name}]")
        for tip in stage.tips:
            spec = spec.moved(tip.label, tip.trajectory.end)
        for slit in stage.slits:
            spec = spec.moved(slit.tip_label, slit.trajectory.end)
        for j, merge in enumerate(stage.merges):
            try:
                spec = plan_merge(spec, merge).spec
            except ValidationError as exc:
                raise _rewrap(exc, f"{path}.merges[{j}]", f"merge[{merge.new_label}]")
        check_domain(spec, f"{path}.domain")
        domains.append(spec)
    return domains


def load_and_validate(path: Path) -> PipelineConfig:
    """
    Load a pipeline config and check it against the schema and across stages.

    Args:
        path: JSON config file

    Returns:
        Validated PipelineConfig

    Raises:
        ValidationError: On a missing file, malformed JSON, a schema violation or
            an inconsistent stage sequence
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Config file not found: {path}", path=str(path))
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"Invalid JSON: {exc}", path=str(path))

    validate_schema(data)
    config = PipelineConfig.from_dict({**data, "stages": []}, base_dir=str(path.parent))
    for k, item in enumerate(data.get("stages", [])):
        try:
            config.stages.append(StageConfig.from_dict(item))
        except ValidationError as exc:
            raise _rewrap(exc, f"stages[{k}]")
    try:
        spec = config.init_domain()
    except ValidationError as exc:
        raise _rewrap(exc, "init", "init")
    except FileNotFoundError as exc:
        raise ValidationError(f"State file not found: {exc.filename}", path="init.state_file")
    simulate_topology(config, spec)
    logger.info(f"Loaded config {path.name}: {len(config.stages)} stages")
    return config


# Family of (0, 7) x (0, 4) with the hole [a, c] x [b, d] --------------------

FAMILY_WIDTH = 7.0
FAMILY_HEIGHT = 4.0
FAMILY_MERGE_TOLERANCE = 5e-2


def rect_hole_config(a: float, b: float, c: float, d: float = 2.0) -> PipelineConfig:
    """
    Three-stage choreography carving the hole [a, c] x [b, d] from (0, 7) x (0, 4).

    The top of the hole lies on the mid-height line, where the initial slit
    [a, c] sits. The slit grows down the right side, along the bottom and up
    the left side; the left tip closes onto the initial slit end a1.
    """
    half_w, half_h = FAMILY_WIDTH / 2.0, FAMILY_HEIGHT / 2.0
    if abs(d - half_h) > 1e-12:
        raise ValidationError(f"The top of the hole must be at y = {half_h}, got d = {d}", path="d")
    if not (0.0 < a < c < FAMILY_WIDTH and 0.0 < b < d):
        raise ValidationError(f"Hole [{a}, {c}] x [{b}, {d}] is not inside the rectangle")

    init = InitConfig(
        rect_slit=RectSlitInput(a1=(a - half_w) / half_w, a2=(c - half_w) / half_w, b=half_h / half_w),
        frame=(complex(half_w), complex(half_w, half_h)),
    )
    top_left, top_right = complex(a, d), complex(c, d)
    bottom_left, bottom_right = complex(a, b), complex(c, b)

    def slit(name: str, base: str, start: complex, end: complex) -> SlitSpec:
        return SlitSpec(name=name, trajectory=TipTrajectory((start, end)), base_vertex=base)

    stages = [
        StageConfig(name="right", slits=[slit("r", "a2", top_right, bottom_right)]),
        StageConfig(name="bottom", slits=[slit("bt", "r.tip", bottom_right, bottom_left)]),
        StageConfig(
            name="left",
            slits=[slit("l", "bt.tip", bottom_left, top_left)],
            merges=[
                MergeDirective(
                    labels=("a1", "r.c1", "bt.c1", "l.c1", "l.tip"),
                    new_label="hole.tl",
                    at=top_left,
                    tolerance=FAMILY_MERGE_TOLERANCE,
                )
            ],
        ),
    ]
    return PipelineConfig(
        init=init,
        stages=stages,
        outputs=OutputConfig(compare=CompareOutput(reference="../reference/rect_holes.yaml")),
        name=f"rect_hole_{a:g}_{b:g}_{c:g}_{d:g}",
        description=f"Rectangle (0,7)x(0,4) minus the hole [{a:g},{c:g}]x[{b:g},{d:g}]",
        descriptor={"a": a, "b": b, "c": c, "d": d},
    )
