"""Exception types shared across the package."""


class UndergridError(Exception):
    """Base class for all package errors."""


class NotFoundError(UndergridError):
    """A referenced layer, node, edge, flag or instance does not exist."""


class ValidationError(UndergridError):
    """Input data violates a structural invariant (bad ring, bad column, ...)."""


class ParseError(ValidationError):
    """Malformed document. Carries the byte offset when known."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class IntegrityError(UndergridError):
    """An edit batch would break referential integrity.

    ``action_index`` identifies the first violating action in the batch.
    """

    def __init__(self, message, action_index=None):
        super().__init__(message)
        self.action_index = action_index


class ConflictError(UndergridError):
    """Double resolution of a flag, or a stale suggestion."""


class AuthorizationError(UndergridError):
    """Actor's role does not grant the capability."""


class UnsupportedOperationError(UndergridError):
    """Geometry pair or operation not supported by the predicate kernel."""
