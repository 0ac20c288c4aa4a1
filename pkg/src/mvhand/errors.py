"""Exception taxonomy shared by every module.

The CLI maps these onto distinct exit codes (see cli.EXIT_CODES), so new
error conditions should reuse one of the classes below instead of raising
bare ValueErrors.
"""


class MvHandError(Exception):
    """Base class for everything raised on purpose by this package."""


class DimensionError(MvHandError):
    """Array shapes incompatible with an operation's contract."""


class NumericError(MvHandError):
    """Non-finite values or an ill-conditioned numeric state."""


class ContractError(MvHandError):
    """An API precondition was violated (wrong type, consumed tape, ...)."""


class ConfigError(MvHandError):
    """Invalid or inconsistent configuration values."""


class FormatError(MvHandError):
    """A file did not match the expected on-disk format."""


class WorkflowError(MvHandError):
    """Steps executed out of order (e.g. stage 2 without stage 1)."""


class VisibilityError(MvHandError):
    """A projected joint fell behind the camera; caller should retry."""
