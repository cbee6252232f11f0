"""Exception types shared across the package."""


class CovShiftError(ValueError):
    pass


class ConfigError(CovShiftError):
    """Malformed environment, family or CLI configuration."""


class DomainError(CovShiftError):
    """An id is out of range or a conditional is taken on a zero-mass event."""


class ShapeError(CovShiftError):
    pass


class InputError(CovShiftError):
    """Arguments outside the domain where a formula is defined."""


class CapabilityError(CovShiftError):
    """Exact computation requested beyond the supported size."""


class NumericError(CovShiftError):
    """Non-finite intermediate values."""
