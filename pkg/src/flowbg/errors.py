"""Exception types shared across the package."""


class FlowBGError(Exception):
    """Base class for package-specific failures."""


class ConfigError(FlowBGError):
    """Invalid or unknown run-configuration content."""


class SingularityError(FlowBGError):
    """Coincident particles where a distance derivative is undefined."""


class DivergenceError(FlowBGError):
    """Non-finite state encountered during numerical integration."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class NonConvergenceError(FlowBGError):
    """Iterative optimization exhausted its budget.

    Carries the last iterate so callers can inspect or restart.
    """

    def __init__(self, message, last_iterate=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class TrainingError(FlowBGError):
    """Training cannot proceed (e.g. too many samples excluded from a loss)."""


class StaleTapeError(FlowBGError):
    """A gradient tape was used after the parameters it recorded changed."""
