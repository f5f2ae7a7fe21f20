"""Exception types shared across the package."""


class MflqError(Exception):
    """Base class for all package-specific failures."""


class AssumptionViolation(MflqError):
    """A standing assumption on the problem data does not hold."""


class NumericalFailure(MflqError):
    """A solver or invariant check failed for otherwise valid inputs."""
