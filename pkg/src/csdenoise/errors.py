"""Exception types shared across the package."""


class CsdError(Exception):
    """Base class for all package errors."""


class ShapeError(CsdError, ValueError):
    """Tensor or array extents are inconsistent with the operation."""


class ConfigError(CsdError, ValueError):
    """Invalid configuration value (group counts, thresholds, modes)."""


class ContractError(CsdError, RuntimeError):
    """An API precondition was violated (non-scalar backward, missing grad)."""


class DispatchError(CsdError, ValueError):
    """A class index fell outside the filter bank's 1..M range."""


class ImageFormatError(CsdError, ValueError):
    """Unreadable or unsupported image file."""


class ModelFormatError(CsdError, ValueError):
    """Unreadable, corrupted, or mismatched model file."""
