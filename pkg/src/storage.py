"""Storage layer for state dumps, parameter tables and grid images."""
import json
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from .domain import INNER, OUTER, AccessoryState, DomainSpec
from .logging_config import get_logger
from .sc_map import GridImage, boundary_polyline

logger = get_logger("storage")

FLOAT_FORMAT = "%.17g"
SVG_MARGIN = 0.02
SVG_NS = "http://www.w3.org/2000/svg"


def state_dump(state: AccessoryState, spec: DomainSpec) -> Dict[str, Any]:
    return {"state": state.to_dict(), "domain": spec.to_dict()}


def load_state_dump(path: Path) -> Tuple[AccessoryState, DomainSpec]:
    """
    Read a state written by ``OutputWriter.save_state``.

    Raises:
        FileNotFoundError: If the file does not exist
    """
    with open(path, "r") as f:
        data = json.load(f)
    return AccessoryState.from_dict(data["state"]), DomainSpec.from_dict(data["domain"])


def parameter_table(state: AccessoryState, spec: DomainSpec) -> pd.DataFrame:
    """One row per accessory parameter: name, value_re, value_im."""
    rows = []
    for side, xs in ((OUTER, state.x_outer), (INNER, state.x_inner)):
        for vertex, x in zip(spec.side_vertices(side), xs):
            rows.append((f"x_{side}[{vertex.label}]", float(x), 0.0))
    for name in ("omega2", "C1", "C2", "c"):
        value = complex(getattr(state, name))
        rows.append((name, value.real, value.imag))
    rows.append(("modulus", state.modulus, 0.0))
    rows.append(("capacity", state.capacity, 0.0))
    return pd.DataFrame(rows, columns=["name", "value_re", "value_im"])


def _fmt(value: float) -> str:
    return format(float(value), ".10g")


def _points_attr(points: np.ndarray) -> str:
    finite = points[np.isfinite(points.real) & np.isfinite(points.imag)]
    return " ".join(f"{_fmt(w.real)},{_fmt(-w.imag)}" for w in finite)


def grid_svg(grid: GridImage, spec: DomainSpec, stroke: float = 0.002) -> ET.Element:
    """
    SVG document with one polyline per grid curve and one per boundary component.

    The viewBox is the bounding box of the outer polyline plus a 2% margin.
    SVG y points down, so the imaginary axis is flipped.
    """
    outer = spec.points(OUTER)
    x0, x1 = float(outer.real.min()), float(outer.real.max())
    y0, y1 = float(outer.imag.min()), float(outer.imag.max())
    margin = SVG_MARGIN * max(x1 - x0, y1 - y0)
    width = x1 - x0 + 2 * margin
    height = y1 - y0 + 2 * margin
    line_width = stroke * max(width, height)

    root = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "viewBox": f"{_fmt(x0 - margin)} {_fmt(-y1 - margin)} {_fmt(width)} {_fmt(height)}",
        },
    )
    grid_group = ET.SubElement(
        root,
        "g",
        {"id": "grid", "fill": "none", "stroke": "#3060a0", "stroke-width": _fmt(line_width)},
    )
    for kind, curves in (("circle", grid.circles), ("ray", grid.rays)):
        for k, curve in enumerate(curves):
            ET.SubElement(
                grid_group, "polyline", {"class": kind, "id": f"{kind}-{k}", "points": _points_attr(curve)}
            )
    boundary = ET.SubElement(
        root,
        "g",
        {"id": "boundary", "fill": "none", "stroke": "#000000", "stroke-width": _fmt(2 * line_width)},
    )
    for side in (OUTER, INNER):
        ET.SubElement(
            boundary,
            "polyline",
            {"class": "boundary", "id": side, "points": _points_attr(boundary_polyline(spec, side))},
        )
    return root


class OutputWriter:
    """Writes the artifacts of one pipeline run into a directory."""

    def __init__(self, results_dir: str = "data/results"):
        """
        Initialize output writer.

        Args:
            results_dir: Directory to store result files
        """
        self.results_dir = Path(results_dir)
        self.results_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def _path(self, filename: str) -> Path:
        path = self.results_dir / filename
        self.written.append(path)
        logger.info(f"Writing {path}")
        return path

    def save_table(self, df: pd.DataFrame, name: str) -> Path:
        """CSV with 17 significant digits."""
        path = self._path(f"{name}.csv")
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    def save_json(self, data: Any, name: str) -> Path:
        path = self._path(f"{name}.json")
        with open(path, "w") as f:
            json.dump(data, f, indent=2)
            f.write("\n")
        return path

    def save_state(self, state: AccessoryState, spec: DomainSpec, name: str = "state") -> Tuple[Path, Path]:
        """
        Save a state as a JSON dump and a parameter CSV.

        Returns:
            Tuple of (json_path, csv_path)
        """
        json_path = self._path(f"{name}.json")
        with open(json_path, "w") as f:
            json.dump(state_dump(state, spec), f, indent=2)
            f.write("\n")
        csv_path = self.save_table(parameter_table(state, spec), f"{name}_parameters")
        return json_path, csv_path

    def save_grid_svg(self, grid: GridImage, spec: DomainSpec, name: str = "grid") -> Path:
        path = self._path(f"{name}.svg")
        root = grid_svg(grid, spec)
        ET.indent(root)
        ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
        return path

    def save_grid_png(
        self, grid: GridImage, spec: DomainSpec, name: str = "grid", dpi: int = 150
    ) -> Path:
        """Raster version of the grid image."""
        path = self._path(f"{name}.png")
        fig = Figure(figsize=(6, 6))
        ax = fig.add_subplot(1, 1, 1)
        for curve in grid.polylines:
            ax.plot(curve.real, curve.imag, color="#3060a0", linewidth=0.6)
        for side in (OUTER, INNER):
            line = boundary_polyline(spec, side)
            ax.plot(line.real, line.imag, color="black", linewidth=1.2)
        ax.set_aspect("equal")
        ax.set_axis_off()
        fig.savefig(path, dpi=dpi, bbox_inches="tight", metadata={"Software": None})
        return path
