"""Exception types shared across the package."""


class SplatsegError(Exception):
    """Base class for all package errors."""


class ConfigError(SplatsegError):
    """Invalid configuration file or parameter value."""


class DataError(SplatsegError):
    """Invalid or inconsistent input data."""


class ParseError(DataError):
    """Malformed input file.

    ``line`` is the 1-based line number of the offending line, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ExternalScorerError(SplatsegError):
    """Base class for failures of an external scorer process."""


class ScorerExitError(ExternalScorerError):
    """External scorer exited with a nonzero status."""


class ScorerTimeoutError(ExternalScorerError):
    """External scorer exceeded its time budget."""


class ScoreMapFormatError(ExternalScorerError):
    """External scorer produced an unreadable score-map file."""


class DimensionMismatchError(ExternalScorerError):
    """Score map dimensions do not match the rendered view."""
