"""Exception hierarchy shared by every dsc module."""


class DSCError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(DSCError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class NumericError(DSCError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class ConfigError(DSCError, ValueError):
    """Invalid hyperparameter or configuration value."""


class VariantError(ConfigError):
    """Operation not supported by the model variant (e.g. decode on an encoder)."""


class DegenerateDataError(DSCError, ValueError):
    """Data has no spread where spread is required."""


class DataError(DSCError, ValueError):
    """Dataset content is unusable (fully missing variable, row-count mismatch)."""


class FormatError(DataError):
    """On-disk dataset or checkpoint does not match its declared format."""


class MetricError(DSCError, ValueError):
    """A metric is undefined for the given labeling."""
