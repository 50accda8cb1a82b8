class GBDSDEError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(GBDSDEError, ValueError):
    """Invalid model, coefficient or experiment configuration."""


class RegressionError(GBDSDEError):
    """A least-squares conditional expectation could not be formed."""


class ImplicitStepError(GBDSDEError):
    """The implicit h-step could not bracket a root (monotonicity violated)."""


class EvaluatorError(GBDSDEError):
    """A coefficient evaluator returned a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
