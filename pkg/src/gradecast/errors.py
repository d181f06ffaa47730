"""Exception types shared across the package."""


class GradecastError(Exception):
    """Base class for package-specific failures."""


class ParseError(GradecastError):
    """Malformed input data; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DivergenceError(GradecastError):
    """Training objective became non-finite; carries the offending epoch."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch
