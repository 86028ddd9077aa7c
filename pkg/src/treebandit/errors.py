"""Error taxonomy shared across the package.

Every raised condition gets its own class so callers (and the CLI) can tell
configuration mistakes from protocol misuse without parsing messages.
"""


class TreebanditError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(TreebanditError, ValueError):
    """A configuration value is out of its documented domain."""


class HorizonTooSmallError(InvalidConfigError):
    """Horizon must satisfy T >= 3 so that ln T > 1."""


class InvalidContextError(TreebanditError, ValueError):
    """Context vector has wrong arity or coordinates outside [0, 1]."""


class InvalidItemError(TreebanditError, ValueError):
    """Item features have wrong arity or coordinates outside [0, 1]."""


class DuplicateItemError(TreebanditError, ValueError):
    """An item id was ingested twice."""


class EmptyRegionError(TreebanditError, ValueError):
    """An operation that needs items was applied to an empty region."""


class NoItemsError(TreebanditError, RuntimeError):
    """The engine was asked to recommend before any item exists."""


class InvalidRewardError(TreebanditError, ValueError):
    """Reward feedback outside [0, 1]."""


class ProtocolError(TreebanditError, RuntimeError):
    """recommend/feedback pairing was violated (stale, duplicate or missing token)."""


class InvariantViolationError(TreebanditError, AssertionError):
    """A structural invariant failed during verification."""
