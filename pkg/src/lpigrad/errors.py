"""Exception types raised by lpigrad."""


class LpiGradError(Exception):
    """Base class for all lpigrad errors."""


class SingularMoment(LpiGradError):
    """The local moment matrix could not be factorized to working precision.

    Usually the bandwidth is too small for the grid resolution.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class MissingValue(LpiGradError, KeyError):
    """A grid point carrying a nonzero weight has no value."""


class DomainViolation(LpiGradError, ValueError):
    """An evaluation point lies outside the admissible hypercube."""


class GridSizeOverflow(LpiGradError, OverflowError):
    """A requested grid exceeds the configured maximum size."""


class NonFinite(LpiGradError, FloatingPointError):
    """An iterate or objective became non-finite or blew up."""


class InnerStall(LpiGradError, RuntimeError):
    """An inner solver hit its iteration cap without certifying accuracy."""


class DegenerateCurvature(LpiGradError, ValueError):
    """Curvature constants make a recurrence undefined (e.g. L == mu)."""


class ConfigError(LpiGradError, ValueError):
    """An experiment configuration is malformed."""
