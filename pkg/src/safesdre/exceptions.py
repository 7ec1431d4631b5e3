"""Exception types shared across the toolkit."""


class SafeSdreError(Exception):
    """Base class for all toolkit errors."""


class NoStabilizingSolution(SafeSdreError):
    """The Riccati equation has no stabilizing solution at this point."""


class IllConditioned(SafeSdreError):
    """A solve succeeded structurally but is numerically untrustworthy.

    For point-wise Riccati solves this usually signals a poor coefficient
    factorization at the queried state.
    """


class SingularOperator(SafeSdreError):
    """The Lyapunov operator is singular (an eigenvalue pair sums to ~0)."""


class UnsafeState(SafeSdreError):
    """A state outside the safe set was passed where safety is required."""


class OriginUnsafe(SafeSdreError):
    """The origin violates a constraint, so barrier augmentation is undefined."""


class SegmentUnsafe(SafeSdreError):
    """The chord from the origin to the state exits the safe set.

    The mean-value factorization integrates the barrier gradient along that
    chord, so it is undefined whenever the chord leaves the safe set.
    """


class QuadratureNotConverged(SafeSdreError):
    """Node doubling hit its cap before the integral estimate settled."""


class MissingDirectDrift(SafeSdreError):
    """The system declares no direct drift to validate the factorization against."""


class InvalidParams(SafeSdreError):
    """Physically meaningless model parameters (non-positive mass, etc.)."""


class StepOutOfDomain(SafeSdreError):
    """A finite-difference probe left the valid domain even after shrinking."""


class ConfigError(SafeSdreError):
    """A scenario configuration failed validation."""


class EmptyTrajectory(SafeSdreError):
    """An operation that needs at least one logged step got an empty log."""
