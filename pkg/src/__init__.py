"""Schwarz-Christoffel maps of the annulus onto polygonal ring domains, with slit continuation."""
from .domain import AccessoryState, DomainSpec, Vertex
from .elliptic import PeriodLattice, log_sigma, weier_p, weier_zeta
from .errors import NumericalError, RingMapError, StageError
from .logging_config import get_logger, setup_logging
from .loewner import MergeDirective, MovingTip, SlitSpec, StageTolerances, TipTrajectory, integrate_stage, merge_tips
from .pipeline import ReferenceTable, compare_reference, run_pipeline
from .pipeline_config import PipelineConfig, StageConfig, load_and_validate, rect_hole_config
from .rect_slit import RectSlitInput, solve
from .sc_map import SchwarzChristoffelMap, eval_map, grid_image
from .validators import ValidationError

__all__ = [
    # Domain and parameters
    'AccessoryState',
    'DomainSpec',
    'Vertex',
    'PeriodLattice',
    # Special functions
    'log_sigma',
    'weier_zeta',
    'weier_p',
    # Maps
    'SchwarzChristoffelMap',
    'eval_map',
    'grid_image',
    'RectSlitInput',
    'solve',
    # Continuation
    'TipTrajectory',
    'MovingTip',
    'SlitSpec',
    'StageTolerances',
    'MergeDirective',
    'integrate_stage',
    'merge_tips',
    # Pipelines
    'PipelineConfig',
    'StageConfig',
    'load_and_validate',
    'rect_hole_config',
    'run_pipeline',
    'ReferenceTable',
    'compare_reference',
    # Utilities
    'setup_logging',
    'get_logger',
    'RingMapError',
    'NumericalError',
    'StageError',
    'ValidationError',
]
