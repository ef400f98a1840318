"""Exception types shared across the package."""


class QkdAdError(Exception):
    """Base class for every error raised by qkdad."""


class InvalidArchitectureError(QkdAdError, ValueError):
    pass


class ShapeError(QkdAdError, ValueError):
    pass


class CacheInvalidError(QkdAdError, ValueError):
    pass


class NumericError(QkdAdError, ArithmeticError):
    pass


class InvalidConfigError(QkdAdError, ValueError):
    pass


class EmptyDataError(QkdAdError, ValueError):
    pass


class DegenerateLabelsError(QkdAdError, ValueError):
    pass


class ParseError(QkdAdError, ValueError):
    """Malformed dataset or config text. Carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(QkdAdError, ValueError):
    """Model container is truncated, corrupted or of an unknown version."""


class StreamError(QkdAdError, RuntimeError):
    pass


class DegenerateAttackWarning(UserWarning):
    """Attack parameters are zero, so attack data matches normal data."""
