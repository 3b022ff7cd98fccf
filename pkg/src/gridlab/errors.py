"""Exception types shared across the package."""


class GridlabError(Exception):
    """Base class for all errors raised by this package."""


class TimeseriesParseError(GridlabError):
    """A timeseries CSV row could not be parsed (bad value, bad timestamp)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CadenceError(GridlabError):
    """Timestamps are not on a strict 30-minute grid."""


class DataIntegrityError(GridlabError):
    """Input data is too broken to use (e.g. more than 5% of rows missing)."""


class ParameterError(GridlabError, ValueError):
    """A scenario or operation parameter is out of its allowed range."""


class InfeasibleError(GridlabError):
    """A sizing problem has no solution within physical bounds."""


class DegenerateShapeError(GridlabError):
    """A per-MW shape collapsed to all zeros and cannot be normalised."""


class UndefinedCostError(GridlabError):
    """A levelized cost was requested over a zero-energy denominator."""
