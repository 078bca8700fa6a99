"""Exception hierarchy shared across the package."""


class TdpamError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(TdpamError, ValueError):
    """Raised when an argument violates a precondition (shape, finiteness, range)."""


class ConfigError(TdpamError, ValueError):
    """Raised when an experiment configuration is invalid. Carries the field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class SizeBoundExceededError(TdpamError):
    """Raised when a dense materialization would exceed the safety bound."""


class SolverDivergenceError(TdpamError):
    """Raised when an iterative solver produces non-finite iterates."""

    def __init__(self, message: str, iteration: int | None = None):
        self.iteration = iteration
        super().__init__(message)


class UndefinedMetricError(TdpamError):
    """Raised when a metric is undefined for the given inputs (zero peak, empty zone...)."""
