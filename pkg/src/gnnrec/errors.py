"""Exception types shared across the package."""


class RecError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(RecError):
    """A ratings file contains lines that do not follow the declared format."""


class DataError(RecError):
    """Empty or degenerate input data (no records, zero users/items)."""


class DimensionError(RecError, ValueError):
    """Vector/matrix shapes are incompatible for the requested operation."""


class SamplingError(RecError):
    """Negative sampling is impossible (user interacted with every item)."""


class DivergedError(RecError):
    """Training produced a non-finite loss."""


class MetricError(RecError):
    """A ranking metric is undefined for the given labels."""


class SnapshotError(RecError):
    """A snapshot file is malformed or incompatible with the active config."""


class ConfigError(RecError):
    """A config file or override is malformed or references unknown keys."""
