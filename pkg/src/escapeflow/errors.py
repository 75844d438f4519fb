"""Exception hierarchy."""


class EscapeflowError(Exception):
    """Base class for all errors raised by escapeflow."""


class DomainError(EscapeflowError, ValueError):
    """An argument lies outside the lattice or the admissible value range."""


class PreconditionError(EscapeflowError, ValueError):
    """An operation was called on inputs that violate its precondition."""


class ConsistencyError(EscapeflowError, RuntimeError):
    """Internal state contradicts an invariant that should hold by construction."""
