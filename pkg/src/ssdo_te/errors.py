"""
Exception hierarchy for ssdo_te.

Input problems derive from ValueError so callers that already guard file
parsing with ``except ValueError`` keep working.
"""

from typing import Optional, Tuple

SD = Tuple[int, int]


class SsdoError(Exception):
    """Base class for all ssdo_te errors."""


class InputError(SsdoError, ValueError):
    """An input file or argument violates a model invariant.

    Attributes:
        path: Offending file, if the error came from a file
        line: 1-based line number inside ``path``, when known
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class InfeasibleError(SsdoError):
    """The instance admits no routing for some demanded pair."""


class NoPath(InfeasibleError):
    """No path exists for a source-destination pair."""

    def __init__(self, sd: SD, message: Optional[str] = None):
        self.sd = sd
        super().__init__(message or f"no path from {sd[0]} to {sd[1]}")


class Disconnects(InfeasibleError):
    """A failure scenario leaves a demanded pair without any path."""

    def __init__(self, sd: SD):
        self.sd = sd
        super().__init__(f"failure scenario disconnects demanded pair {sd}")


class NeverFeasible(InfeasibleError):
    """Subproblem search found no feasible point even at its upper bound.

    Signals that the utilization state is out of sync with the split ratios.
    """


class DegenerateWeights(InputError):
    """All gravity node weights are zero."""


class CapacityZeroWithLoad(InputError):
    """A zero-capacity edge carries positive traffic."""


class ZeroDemand(SsdoError, ValueError):
    """A subproblem was requested for a pair with no demand."""


class TooLarge(SsdoError, ValueError):
    """An exhaustive search exceeds its dimension cap."""
