"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes, so every error raised by the
library should be (a subclass of) one of the classes below.
"""


class AirwayBelError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParameterError(AirwayBelError):
    """Invalid argument: bad shape, bad range, malformed option."""

    exit_code = 2


class FormatError(AirwayBelError):
    """Unreadable or unsupported input file."""

    exit_code = 3


class EmptyInputError(AirwayBelError):
    """An operation that needs foreground voxels received none."""

    exit_code = 4


class DegenerateInputError(AirwayBelError):
    """Inputs are technically valid but make the result meaningless."""

    exit_code = 4
