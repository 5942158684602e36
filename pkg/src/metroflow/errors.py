"""Exception types shared across the package."""


class MetroflowError(Exception):
    """Base class for all metroflow errors."""


class DimensionError(MetroflowError):
    """Shapes or index ranges do not line up."""


class NumericError(MetroflowError):
    """A value that must be finite is not."""


class UsageError(MetroflowError):
    """An API was called in a way its contract forbids."""


class ConfigError(MetroflowError):
    """A model, training or dataset configuration violates a constraint."""


class SchemaError(MetroflowError):
    """An input file does not match the expected schema."""


class CompatibilityError(MetroflowError):
    """Artifacts built against different datasets were mixed."""
