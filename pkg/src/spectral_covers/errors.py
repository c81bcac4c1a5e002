"""Exception types shared across the package."""


class GraphError(ValueError):
    """Invalid graph data or an invalid request against a graph."""


class DomainError(ValueError):
    """A vertex function or vertex set violates a domain precondition."""


class CoverError(ValueError):
    """Invalid covering data, or a query the truncation cannot answer."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ValueError):
    """Bad scenario configuration."""
