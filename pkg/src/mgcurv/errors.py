"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class MetricGraphError(Exception):
    """Base class for every error raised by mgcurv."""


class GraphDescriptionError(MetricGraphError):
    """Malformed graph description (unknown field, bad type, missing key)."""


class DisconnectedGraph(GraphDescriptionError):
    pass


class NonpositiveLength(GraphDescriptionError):
    pass


class DanglingVertexReference(GraphDescriptionError):
    pass


class SolverFailure(MetricGraphError):
    """A numerical solver did not reach its residual tolerance."""


class NonpositiveTime(MetricGraphError, ValueError):
    pass


class GridMismatch(MetricGraphError, ValueError):
    pass


class AtomicMeasure(MetricGraphError, ValueError):
    """Operation needs an absolutely continuous measure but got atoms."""


class MassMismatch(MetricGraphError, ValueError):
    pass


class EntropyInfinite(MetricGraphError):
    pass


class DegenerateDenominator(MetricGraphError):
    pass


class FisherInfinite(MetricGraphError):
    """Fisher information is infinite (zero density with nonzero slope, or atoms)."""
