class HitlError(Exception):
    """Base class for all package errors."""


class ParameterError(HitlError, ValueError):
    pass


class InsufficientDataError(HitlError, ValueError):
    pass


class ValidationError(HitlError, ValueError):
    pass


class ConfigurationError(HitlError, ValueError):
    pass


class DecodeError(HitlError, ValueError):
    """Raised for malformed wire lines or binary Q-table files.

    ``field`` names the offending field when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
