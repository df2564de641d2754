"""Exception types shared across the package."""


class GraphError(ValueError):
    """Malformed graph document or invalid graph/spec structure."""


class DomainError(ValueError):
    """An operation was evaluated or relaxed outside its valid domain."""
