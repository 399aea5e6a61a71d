"""
Stage-chaining orchestrator.

A pipeline solves the initial map, then runs each continuation stage on the
previous stage's post-merge parameters. Between stages only C2 is refreshed
(C1 and the prevertices are handed over as they are).
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
import yaml

from .checkpoint import CheckpointManager
from .domain import AccessoryState, DomainSpec
from .errors import RingMapError, StageError
from .logging_config import get_logger
from .loewner import ContinuationDiagnostics, MergeReport, integrate_stage, merge_tips, modulus_trace
from .pipeline_config import REFERENCE_SOURCES, PipelineConfig, StageConfig
from .rect_slit import solve, rectangle_report
from .sc_map import canonicalize, grid_image, refresh_c2
from .storage import OutputWriter, load_state_dump
from .validators import ReferenceMismatchError, ValidationError

logger = get_logger("pipeline")

CAP_MOD_TOL = 1e-12


@dataclass
class StageReport:
    """Outcome of one stage after merging and the C2 refresh."""

    index: int
    name: str
    diagnostics: ContinuationDiagnostics
    merges: List[MergeReport]
    c2_delta: complex
    modulus: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "name": self.name,
            "modulus": self.modulus,
            "c2_delta": abs(self.c2_delta),
            "merges": [
                {
                    "new_label": m.new_label,
                    "spread": m.spread,
                    "alpha": m.alpha,
                    "members": list(m.members),
                }
                for m in self.merges
            ],
            **self.diagnostics.to_dict(),
        }


@dataclass
class PipelineResult:
    state: AccessoryState
    spec: DomainSpec
    stage_reports: List[StageReport] = field(default_factory=list)
    resumed_after: Optional[int] = None
    outputs: List[Path] = field(default_factory=list)

    @property
    def modulus(self) -> float:
        return self.state.modulus


def initial_map(config: PipelineConfig) -> Tuple[AccessoryState, DomainSpec]:
    """Solve (or load) the map a pipeline starts from."""
    init = config.init
    if init.rect_slit is not None:
        solution = solve(init.rect_slit, beta_method=init.beta_method, frame=init.frame)
        return solution.state, solution.spec
    return load_state_dump(config.resolve(init.state_file))


def run_stage(
    index: int, stage: StageConfig, state: AccessoryState, spec: DomainSpec
) -> Tuple[AccessoryState, DomainSpec, StageReport]:
    """Integrate one stage, apply its merges and refresh C2."""
    state, spec, diagnostics = integrate_stage(
        state, spec, stage.tips, stage.slits, stage.t_span, stage.tolerances
    )
    state, spec, merges = merge_tips(state, spec, stage.merges)
    state, delta = refresh_c2(state, spec)
    logger.info(f"Stage {index}: C2 refreshed by {abs(delta):.3g}")
    report = StageReport(
        index=index,
        name=stage.name,
        diagnostics=diagnostics,
        merges=merges,
        c2_delta=delta,
        modulus=state.modulus,
    )
    return state, spec, report


def run_pipeline(
    config: PipelineConfig,
    out_dir: Optional[Path] = None,
    resume: bool = False,
    checkpoint_dir: Optional[Path] = None,
) -> PipelineResult:
    """
    Run the initial solve and every stage of a validated config.

    Args:
        config: Pipeline config (see ``load_and_validate``)
        out_dir: Directory for outputs; nothing is written when None
        resume: Restart after the last checkpointed stage
        checkpoint_dir: Defaults to ``<out_dir>/checkpoints``

    Returns:
        PipelineResult with the final state and one report per stage run

    Raises:
        StageError: If a stage fails; outputs of completed stages are kept
    """
    writer = OutputWriter(str(out_dir)) if out_dir is not None else None
    if checkpoint_dir is None and out_dir is not None:
        checkpoint_dir = Path(out_dir) / "checkpoints"
    manager = CheckpointManager(str(checkpoint_dir)) if checkpoint_dir is not None else None

    start = 0
    resumed_after = None
    checkpoint = manager.get_latest_checkpoint(config.name) if (resume and manager) else None
    if checkpoint is not None:
        state, spec = checkpoint.restore()
        start = checkpoint.stage_index + 1
        resumed_after = checkpoint.stage_index
        logger.info(f"Resuming {config.name or 'pipeline'} after stage {checkpoint.stage_index}")
    else:
        state, spec = initial_map(config)
        logger.info(f"Initial map solved: modulus {state.modulus:.17g}")
        if manager is not None:
            stale = manager.clear_checkpoints(config.name)
            if stale:
                logger.info(f"Removed {stale} checkpoints of an earlier run")

    reports = []
    for k in range(start, len(config.stages)):
        stage = config.stages[k]
        try:
            state, spec, report = run_stage(k, stage, state, spec)
        except RingMapError as exc:
            logger.error(f"Stage {k} ({stage.name or 'unnamed'}) failed: {exc}")
            raise StageError(f"Stage {k} failed: {exc}", k) from exc
        reports.append(report)
        if writer is not None and config.outputs.modulus_trace:
            writer.save_table(modulus_trace(report.diagnostics), f"modulus_trace_stage{k}")
        if manager is not None:
            manager.save_checkpoint(
                manager.create_checkpoint(config.name, k, len(config.stages), state, spec)
            )

    # Report prevertices in [0, omega1); C1 and c follow the representatives.
    state = canonicalize(state, spec)
    result = PipelineResult(state=state, spec=spec, stage_reports=reports, resumed_after=resumed_after)
    if writer is not None:
        result.outputs = emit_outputs(result, config, writer)
    return result


# reference tables ---------------------------------------------------------


def descriptor_key(descriptor: Mapping[str, float]) -> Tuple[Tuple[str, float], ...]:
    return tuple(sorted((str(k), round(float(v), 12)) for k, v in descriptor.items()))


def descriptor_label(descriptor: Mapping[str, float]) -> str:
    return ",".join(f"{k}={v:g}" for k, v in descriptor_key(descriptor))


@dataclass(frozen=True)
class ReferenceRow:
    descriptor: Tuple[Tuple[str, float], ...]
    modulus: float
    capacity: float
    source: str


@dataclass
class ReferenceTable:
    """Published moduli and capacities, one row per (domain, source)."""

    rows: List[ReferenceRow]
    title: str = ""

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ReferenceTable":
        """
        Build a table from parsed YAML.

        Raises:
            ValidationError: If a row is incomplete, has an unknown source tag, or
                violates capacity = 1 / modulus
        """
        rows = []
        for i, item in enumerate(data.get("rows", [])):
            path = f"rows[{i}]"
            try:
                modulus = float(item["modulus"])
                capacity = float(item["capacity"])
                descriptor = descriptor_key(item["descriptor"])
                source = str(item["source"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"Malformed reference row: {exc}", path=path)
            if source not in REFERENCE_SOURCES:
                raise ValidationError(f"Unknown source tag {source!r}", path=f"{path}.source")
            if abs(capacity * modulus - 1.0) > CAP_MOD_TOL:
                raise ValidationError(
                    f"capacity * modulus = {capacity * modulus:.17g} is not 1", path=path
                )
            rows.append(ReferenceRow(descriptor, modulus, capacity, source))
        return cls(rows=rows, title=str(data.get("title", "")))

    @classmethod
    def load(cls, path: Path) -> "ReferenceTable":
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f)
        except FileNotFoundError:
            raise ValidationError(f"Reference table not found: {path}", path=str(path))
        except yaml.YAMLError as exc:
            raise ValidationError(f"Invalid YAML: {exc}", path=str(path))
        return cls.from_dict(data or {})

    def lookup(self, descriptor: Mapping[str, float], source: Optional[str] = None) -> List[ReferenceRow]:
        key = descriptor_key(descriptor)
        return [
            row for row in self.rows if row.descriptor == key and (source is None or row.source == source)
        ]


def compare_reference(
    results: Sequence[Tuple[Mapping[str, float], AccessoryState]],
    table: ReferenceTable,
    source: Optional[str] = None,
) -> pd.DataFrame:
    """
    Computed versus expected modulus and capacity for every matching reference row.

    Args:
        results: (descriptor, final state) pairs
        table: Reference table
        source: Restrict to one source tag

    Returns:
        DataFrame with absolute and relative deviations, one row per match

    Raises:
        ReferenceMismatchError: If a descriptor has no row in the table
    """
    records = []
    for descriptor, state in results:
        rows = table.lookup(descriptor, source)
        if not rows:
            raise ReferenceMismatchError(
                f"No reference row for {descriptor_label(descriptor)}"
                + (f" with source {source!r}" if source else ""),
                path="descriptor",
            )
        for row in rows:
            mod_dev = abs(state.modulus - row.modulus)
            cap_dev = abs(state.capacity - row.capacity)
            records.append(
                {
                    "descriptor": descriptor_label(descriptor),
                    "source": row.source,
                    "modulus": state.modulus,
                    "expected_modulus": row.modulus,
                    "modulus_abs_dev": mod_dev,
                    "modulus_rel_dev": mod_dev / abs(row.modulus),
                    "capacity": state.capacity,
                    "expected_capacity": row.capacity,
                    "capacity_abs_dev": cap_dev,
                    "capacity_rel_dev": cap_dev / abs(row.capacity),
                }
            )
    df = pd.DataFrame.from_records(records)
    worst = df.loc[df["modulus_abs_dev"].idxmax()]
    logger.info(
        f"Worst reference row: {worst['descriptor']} ({worst['source']}), "
        f"modulus deviation {worst['modulus_abs_dev']:.3g}"
    )
    return df


def worst_row(comparison: pd.DataFrame) -> pd.Series:
    """Row with the largest modulus deviation."""
    return comparison.loc[comparison["modulus_abs_dev"].idxmax()]


# outputs ------------------------------------------------------------------


def emit_outputs(result: PipelineResult, config: PipelineConfig, writer: OutputWriter) -> List[Path]:
    """
    Write the artifacts requested by ``config.outputs``.

    Returns:
        Paths written, in order
    """
    outputs = config.outputs
    first = len(writer.written)
    if outputs.state:
        writer.save_state(result.state, result.spec, "state")
    if result.stage_reports:
        writer.save_json([report.to_dict() for report in result.stage_reports], "stages")
    if outputs.rectangles:
        writer.save_table(rectangle_report(), "rectangles")
    if outputs.grid is not None:
        grid = grid_image(
            result.state,
            result.spec,
            outputs.grid.n_radii,
            outputs.grid.n_rays,
            gap_fraction=outputs.grid.gap_fraction,
        )
        if grid.gaps:
            logger.warning(f"Grid image has {grid.gaps} unevaluated points")
        writer.save_grid_svg(grid, result.spec, "grid")
        if outputs.grid.png:
            writer.save_grid_png(grid, result.spec, "grid")
    if outputs.compare is not None:
        if config.descriptor is None:
            raise ValidationError("A comparison needs a descriptor", path="descriptor")
        table = ReferenceTable.load(config.resolve(outputs.compare.reference))
        comparison = compare_reference(
            [(config.descriptor, result.state)], table, outputs.compare.source
        )
        writer.save_table(comparison, "comparison")
    return writer.written[first:]
