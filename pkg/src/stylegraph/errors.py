"""Exception hierarchy shared by every stylegraph module."""
from __future__ import annotations


class StyleGraphError(Exception):
    """Base class for all library errors."""


class ParseError(StyleGraphError, ValueError):
    """Malformed trajectory or annotation input."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(ParseError):
    """Frame indices for one agent are not strictly increasing."""


class EmptyInputError(ParseError):
    """Input contained no data rows."""


class DomainError(StyleGraphError, ValueError):
    """A numeric argument is outside its admissible range."""


class CapacityError(StyleGraphError):
    """More simultaneous agents than the adjacency capacity allows."""


class AgentLookupError(StyleGraphError, KeyError):
    """Agent id is unknown or unmapped at the requested frame."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class WindowRangeError(StyleGraphError, IndexError):
    """Requested frame window is not covered by the data."""


class SingularFitError(StyleGraphError, ArithmeticError):
    """Design matrix is rank deficient and no regularisation was requested."""


class StyleKindError(StyleGraphError, TypeError):
    """Style estimator applied to the wrong centrality kind."""


class IncompleteInputError(StyleGraphError, ValueError):
    """A required upstream result is missing."""


class DegenerateDatasetError(DomainError):
    """Training set does not contain enough examples per class."""


class DimensionError(StyleGraphError, TypeError):
    """Feature vector length does not match the model input."""


class PlacementError(StyleGraphError):
    """Vehicles cannot be placed with the requested spacing."""


class ConfigError(StyleGraphError, ValueError):
    """Configuration value outside the range declared by its owner."""


class CalibrationError(StyleGraphError):
    """Calibration loop did not reach the target band.

    ``best`` carries the best-so-far :class:`~stylegraph.synthgen.CalibrationResult`.
    """

    def __init__(self, message: str, best) -> None:
        super().__init__(message)
        self.best = best
