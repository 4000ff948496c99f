"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation."""


class UsageError(ValueError):
    """Bad parameters supplied by a caller."""


class StructuralError(RuntimeError):
    """A linear system or graph is structurally unusable."""


class CapacityError(RuntimeError):
    """Requested exact computation exceeds the size caps."""
