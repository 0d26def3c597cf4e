"""Exception hierarchy for sdtransit.

Every error carries the process exit code the CLI reports for it:
0 success, 1 internal error, 2 invalid data, 3 I/O, 4 invalid config.
"""

from pathlib import Path


class SdtransitError(Exception):
    """Base class for all errors raised by sdtransit."""

    exit_code: int = 1


class InvalidData(SdtransitError, ValueError):
    """Input data violates a format or domain invariant."""

    exit_code = 2


class _LineError(InvalidData):
    def __init__(self, line: int | None, reason: str):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class MalformedRecord(_LineError):
    """A record could not be parsed at all."""


class InvariantViolation(_LineError):
    """A record parsed but broke a domain invariant (negative width, score > 1, ...)."""


class NegativeCount(_LineError):
    """A headcount value was negative."""


class EmptyInput(InvalidData):
    """Input held zero records and no header."""

    def __init__(self, reason: str = "input contains no records and no header"):
        super().__init__(reason)


class EmptySeries(InvalidData):
    """No frame of a relative-change series was defined."""

    def __init__(self, reason: str = "no defined relative-change frames to average"):
        super().__init__(reason)


class FrameDomainMismatch(InvalidData):
    """Series or streams that must share a frame domain do not."""

    def __init__(self, start: int, end: int, reason: str):
        self.start = start
        self.end = end
        super().__init__(f"frames {start}..{end}: {reason}")


class InvalidConfig(SdtransitError, ValueError):
    """A configuration value is out of bounds.

    Attributes:
        field: Name of the offending configuration field, when known.
    """

    exit_code = 4

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message)


class InputOutputError(SdtransitError, OSError):
    """Reading or writing a file failed."""

    exit_code = 3

    def __init__(self, path: Path | str, reason: str):
        self.path = Path(path)
        super().__init__(f"{path}: {reason}")
