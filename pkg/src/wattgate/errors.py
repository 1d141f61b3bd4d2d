"""Exception hierarchy shared by every module.

Each class maps to one CLI exit code, so the command layer can catch
WattgateError and report a category without inspecting messages.
"""


class WattgateError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(WattgateError):
    """Invalid shapes, hyperparameters, or option combinations."""

    exit_code = 2


class DataError(WattgateError):
    """Input data violates a documented precondition (values, lengths, ranges)."""

    exit_code = 3


class ParseError(DataError):
    """Malformed file content. Carries file path and line number when known."""

    exit_code = 3

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc = f"{loc}line {line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class UsageError(WattgateError):
    """API misuse: calls that are wrong regardless of the data."""

    exit_code = 4


class NumericalError(WattgateError):
    """A computation produced NaN or Inf, or would (log of a non-positive)."""

    exit_code = 5
