"""Domain errors shared across modules."""


class ValidationError(ValueError):
    """Caller-supplied input violates a precondition."""


class NotFoundError(KeyError):
    """Referenced entity does not exist."""


class ConflictError(RuntimeError):
    """Operation conflicts with the entity's current state."""
