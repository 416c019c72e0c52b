"""Exception types shared across the package."""


class HtsidError(Exception):
    """Base class for all package-specific errors."""


class FormatError(HtsidError, ValueError):
    """A file is malformed or uses an unsupported encoding."""


class ConfigError(HtsidError, ValueError):
    """A configuration value violates its contract."""


class EmptyInputError(HtsidError, ValueError):
    """An operation received no usable input."""


class EmptyResultError(HtsidError, ValueError):
    """An operation would return an empty result where one is required."""


class InsufficientDataError(HtsidError, ValueError):
    """Too few frames or samples for the requested operation."""


class DegenerateDataError(HtsidError, ValueError):
    """Data has zero spread or a singular covariance where it must not."""


class DimensionMismatchError(HtsidError, ValueError):
    """Input dimensionality disagrees with a model or registry."""


class LatticeOverflowError(HtsidError, OverflowError):
    """A transformed point rounds outside the signed 64-bit lattice."""
