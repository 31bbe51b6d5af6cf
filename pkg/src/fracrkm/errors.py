"""Exception hierarchy shared across the package."""


class FracRKMError(Exception):
    """Base class for all package errors."""


class InvalidArgument(FracRKMError, ValueError):
    pass


class DomainError(FracRKMError, ValueError):
    pass


class ValidationError(FracRKMError, ValueError):
    pass


class FormatError(FracRKMError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ResourceLimit(FracRKMError):
    pass


class DegeneracyError(FracRKMError, ValueError):
    pass


class ConditioningError(FracRKMError, ValueError):
    pass


class PreconditionError(FracRKMError, ValueError):
    pass


class ConvergenceError(FracRKMError):
    """Iteration cap reached; ``best`` carries the best iterate found."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)
