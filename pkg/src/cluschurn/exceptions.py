"""Exception hierarchy shared across the package."""


class ClusChurnError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ClusChurnError, ValueError):
    """Input violates a documented invariant (negative count, bad shape, ...)."""


class ParseError(ValidationError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeError(ValidationError, IndexError):
    """A day range or index falls outside the series."""


class NumericalError(ClusChurnError, FloatingPointError):
    """A computation produced non-finite values."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class NotFittedError(ClusChurnError, AttributeError):
    """An estimator was used before ``fit``."""
