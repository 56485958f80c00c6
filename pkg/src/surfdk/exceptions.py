"""Exception types raised across the package."""


class SurfDKError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SurfDKError):
    """Invalid surface, potential or experiment configuration."""


class DimensionError(SurfDKError, ValueError):
    """Grid or array shape is not acceptable."""


class IntegratorBlowup(SurfDKError, FloatingPointError):
    """A time stepper produced a non-finite value."""

    def __init__(self, message, step=None, time=None, index=None):
        super().__init__(message)
        self.step = step
        self.time = time
        self.index = index


class EstimationError(SurfDKError):
    """An iterative estimate failed to converge."""
