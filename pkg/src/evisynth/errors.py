"""Shared exception types."""


class ValidationError(ValueError):
    """Raised when a value violates a domain invariant."""
