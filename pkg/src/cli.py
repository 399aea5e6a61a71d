"""Command-line interface: init-rect, run, grid and verify."""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from .errors import NumericalError, RingMapError, StageError
from .logging_config import get_logger, setup_logging
from .pipeline import ReferenceTable, compare_reference, run_pipeline, worst_row
from .pipeline_config import REFERENCE_SOURCES, load_and_validate
from .rect_slit import BETA_METHODS, RectSlitInput, solve, rectangle_report
from .sc_map import grid_image
from .storage import OutputWriter, load_state_dump, parameter_table
from .validators import ValidationError

logger = get_logger("cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def exit_code_for(exc: BaseException) -> int:
    """Map an error to the CLI exit code; stage failures use their cause."""
    if isinstance(exc, StageError) and exc.__cause__ is not None:
        return exit_code_for(exc.__cause__)
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_FAILURE


def _print_table(df: pd.DataFrame) -> None:
    with pd.option_context("display.float_format", "{:.17g}".format, "display.width", 160):
        print(df.to_string(index=False))


def cmd_init_rect(args: argparse.Namespace) -> int:
    if args.table:
        _print_table(rectangle_report(beta_method=args.beta_method))
        return EXIT_OK
    if args.b is None or args.a1 is None or args.a2 is None:
        raise ValidationError("--b, --a1 and --a2 are required without --table", path="init-rect")
    solution = solve(RectSlitInput(a1=args.a1, a2=args.a2, b=args.b), beta_method=args.beta_method)
    _print_table(parameter_table(solution.state, solution.spec))
    if args.out:
        OutputWriter(args.out).save_state(solution.state, solution.spec, "state")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_and_validate(Path(args.config))
    result = run_pipeline(config, out_dir=Path(args.out), resume=args.resume)
    print(f"modulus  {result.modulus:.17g}")
    print(f"capacity {result.state.capacity:.17g}")
    for path in result.outputs:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    state, spec = load_state_dump(Path(args.state))
    grid = grid_image(state, spec, args.radii, args.rays)
    svg = Path(args.svg)
    writer = OutputWriter(str(svg.parent))
    writer.save_grid_svg(grid, spec, svg.stem)
    if args.png:
        writer.save_grid_png(grid, spec, svg.stem)
    if grid.gaps:
        logger.warning(f"{grid.gaps} grid points could not be evaluated")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    config = load_and_validate(Path(args.config))
    if config.descriptor is None:
        raise ValidationError("The config has no descriptor to compare", path="descriptor")
    table = ReferenceTable.load(Path(args.reference))
    result = run_pipeline(config, out_dir=Path(args.out) if args.out else None)
    comparison = compare_reference([(config.descriptor, result.state)], table, args.source)
    _print_table(comparison)
    worst = worst_row(comparison)
    print(f"worst modulus deviation {worst['modulus_abs_dev']:.3g} ({worst['source']})")
    if args.out:
        OutputWriter(args.out).save_table(comparison, "verify")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringmap",
        description="Conformal maps of the annulus onto polygonal ring domains",
    )
    parser.add_argument(
        "--log-level",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        default=None,
        help="Overrides RINGMAP_LOG",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-rect", help="Exact parameters of a rectangle with a slit")
    p.add_argument("--b", type=float, help="Rectangle half-height")
    p.add_argument("--a1", type=float, help="Left slit end")
    p.add_argument("--a2", type=float, help="Right slit end")
    p.add_argument("--table", action="store_true", help="Print the five b = 0.5 reference rows")
    p.add_argument("--beta-method", choices=BETA_METHODS, default="closed")
    p.add_argument("--out", default=None, help="Directory for a state dump")
    p.set_defaults(func=cmd_init_rect)

    p = sub.add_parser("run", help="Run a pipeline config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="Continue after the last checkpoint")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="Image of a polar grid for a saved state")
    p.add_argument("--state", required=True)
    p.add_argument("--radii", type=int, default=8)
    p.add_argument("--rays", type=int, default=24)
    p.add_argument("--svg", required=True)
    p.add_argument("--png", action="store_true", help="Also write a PNG next to the SVG")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify", help="Run a config and compare with a reference table")
    p.add_argument("--config", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--source", choices=REFERENCE_SOURCES, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(log_level=args.log_level)
    try:
        return args.func(args)
    except RingMapError as exc:
        code = exit_code_for(exc)
        logger.error(f"{type(exc).__name__}: {exc}")
        return code
    except OSError as exc:
        logger.error(f"Cannot write output: {exc}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
