"""Exception hierarchy for numerical and domain failures."""
from typing import Any, Dict, Optional


class RingMapError(Exception):
    """Base class for all errors raised by the toolkit."""
    pass


class NumericalError(RingMapError):
    """A numerical evaluation failed; ``details`` carries the offending values."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = dict(details or {})


class InvalidLatticeError(NumericalError):
    """Period lattice is degenerate or its nome does not converge."""
    pass


class PoleError(NumericalError):
    """Argument lies on (or numerically at) a pole."""
    pass


class DomainError(NumericalError):
    """Argument outside the mathematical domain of a function."""
    pass


class BranchError(NumericalError):
    """Integration path runs through a branch point."""
    pass


class PathError(NumericalError):
    """No admissible integration path could be routed."""
    pass


class PrevertexProximityError(PathError):
    """Integrand evaluated too close to a prevertex."""
    pass


class AccuracyError(NumericalError):
    """Quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.estimate = estimate


class DegeneracyError(NumericalError):
    """Continuation hit a degenerate configuration; ``state`` is the last good state."""

    def __init__(self, message: str, state: Any = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.state = state


class DegenerateDomainError(DegeneracyError):
    """The requested domain is too close to a degenerate one to be represented."""
    pass


class TopologyError(NumericalError):
    """Cyclic order of prevertices changed during a stage."""

    def __init__(self, message: str, state: Any = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.state = state


class DriftError(NumericalError):
    """Imaginary part of a real-valued right-hand side exceeded its threshold."""

    def __init__(self, message: str, state: Any = None, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.state = state


class MergeError(NumericalError):
    """A merge group is too spread out or not contiguous."""
    pass


class StageError(RingMapError):
    """A pipeline stage failed; the original error is chained as ``__cause__``."""

    def __init__(self, message: str, stage_index: int):
        super().__init__(message)
        self.stage_index = stage_index
