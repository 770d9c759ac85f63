"""Exception hierarchy shared across the package."""


class ClustAssocError(Exception):
    """Base class for all package-specific errors."""


class ClusterDataError(ClustAssocError, ValueError):
    """Invalid input data, configuration, or violated preconditions."""


class CsvFormatError(ClusterDataError):
    """Malformed input CSV (missing header, bad cell, wrong columns)."""


class EstimationError(ClustAssocError, RuntimeError):
    """A computation could not produce a valid result."""


class DegenerateVarianceError(EstimationError):
    """A margin is (numerically) constant, so a correlation is undefined."""
