"""Exception types shared across the package."""


class ScatterReconError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ScatterReconError):
    """Invalid inputs: bad dimensions, malformed files, bad config values."""


class InfeasibleMeanError(ScatterReconError):
    """A Poisson mean of zero was paired with a strictly positive count."""


class UnboundedVoxelError(ScatterReconError):
    """A voxel with no observation weight received a data pull (e > 0)."""


class NonFiniteError(ScatterReconError):
    """A NaN or Inf appeared in an iterate or objective value."""


class OracleFailure(ScatterReconError):
    """A reference/oracle routine failed to converge within its iteration cap."""
