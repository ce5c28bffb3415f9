"""Exception types raised across the package."""


class EdgeSplitError(Exception):
    """Base class for all package errors."""


class InvalidPartitionError(EdgeSplitError, ValueError):
    pass


class InvalidContextError(EdgeSplitError, ValueError):
    pass


class InvalidParameterError(EdgeSplitError, ValueError):
    pass


class InvalidWeightsError(EdgeSplitError, ValueError):
    pass


class OutOfSupportError(EdgeSplitError, ValueError):
    """A point lies where the calibration density is zero."""


class EmptyIntervalError(EdgeSplitError, ValueError):
    pass


class TrainingError(EdgeSplitError, RuntimeError):
    """Predictor training did not reach the configured held-out error."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class NotFittedError(EdgeSplitError, RuntimeError):
    pass


class SamplingError(EdgeSplitError, RuntimeError):
    pass


class TraceFormatError(EdgeSplitError, ValueError):
    pass


class SchemaVersionError(EdgeSplitError, ValueError):
    pass


class ConfigError(EdgeSplitError, ValueError):
    pass
