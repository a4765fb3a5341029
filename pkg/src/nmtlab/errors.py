"""Shared exception types. The CLI maps each class to a distinct exit code."""


class NmtLabError(Exception):
    """Base class for all nmtlab errors."""


class ShapeError(NmtLabError):
    """Operands have incompatible shapes."""


class InputError(NmtLabError):
    """User-supplied data is unusable (empty corpus, malformed file, ...)."""


class ContractError(NmtLabError):
    """A caller broke an internal precondition."""


class ConfigError(NmtLabError):
    """Invalid configuration value or combination."""


class CompatibilityError(NmtLabError):
    """Stored artifact (checkpoint, vocabulary) does not match this command."""
