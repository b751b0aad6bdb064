"""Exception types shared across the package."""


class MfhError(Exception):
    """Base class for all package errors."""


class DimensionError(MfhError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ParameterError(MfhError, ValueError):
    """A configuration value is out of its allowed range."""


class FormatError(MfhError, ValueError):
    """A file does not follow the expected binary layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(MfhError, ArithmeticError):
    """A computation produced a non-finite value."""
