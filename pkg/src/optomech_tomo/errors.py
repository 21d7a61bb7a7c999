"""Exception types shared across the package."""


class OptomechError(Exception):
    """Base class for all package errors."""


class InvalidInputError(OptomechError, ValueError):
    """Arguments violate a documented precondition."""


class IllPosedError(OptomechError):
    """Linear system is rank deficient or too badly conditioned to trust."""

    def __init__(self, message, condition_number=None, plan=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.plan = plan


class ConsistencyError(OptomechError):
    """An internal numerical consistency check failed."""


class IntegratorError(OptomechError):
    """Time integration drifted beyond its tolerance."""


class ResourceError(OptomechError):
    """A requested problem size exceeds the configured cap."""
