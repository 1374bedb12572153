"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
data problems exit 3 and numeric failures exit 4.
"""


class SpoofnetError(Exception):
    exit_code = 1


class ConfigError(SpoofnetError, ValueError):
    exit_code = 2


class DataError(SpoofnetError):
    exit_code = 3


class ParseError(DataError, ValueError):
    """Malformed file content; carries the byte offset or line number when known."""

    def __init__(self, message, *, offset=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class UnsupportedFormatError(DataError, ValueError):
    pass


class NumericError(SpoofnetError, ArithmeticError):
    exit_code = 4


class ShapeError(ValueError):
    """Raised by tensor ops on incompatible dimensions."""
