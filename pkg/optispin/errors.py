class OptispinError(Exception):
    """Base class for every error raised by optispin."""


class ConfigError(OptispinError):
    """
    Raised when a run configuration violates the schema.

    :param message str: what went wrong
    :param section str: the offending section, if known
    :param key str: the offending key, if known
    :param line int: the line in the config text, if known
    """
    def __init__(self, message, section=None, key=None, line=None):
        self.section = section
        self.key = key
        self.line = line
        location = []
        if line is not None:
            location.append('line %d' % line)
        if section is not None:
            location.append('[%s]' % section if key is None else '[%s] %s' % (section, key))

        if location:
            message = '%s (%s)' % (message, ', '.join(location))

        super().__init__(message)


class IntegratorError(OptispinError):
    """Raised when an evolved state leaves the physical state space."""
    def __init__(self, message, min_eigenvalue=None):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class StiffnessError(IntegratorError):
    """Raised when the required step size underflows."""


class SegmentError(OptispinError):
    """Wraps a solver error raised while evolving one segment of a sequence."""
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__('segment %d: %s' % (index, cause))


class UnsupportedRegimeError(OptispinError):
    pass


class OutOfRangeError(OptispinError):
    pass


class NyquistError(OptispinError):
    pass


class IterationDivergedError(OptispinError):
    def __init__(self, message, report):
        self.report = report
        super().__init__(message)


class FitError(OptispinError):
    pass


class UndersampledError(OptispinError):
    pass


class GridMismatchError(OptispinError):
    pass


class WaveformError(OptispinError):
    pass


class PipelineError(OptispinError):
    """
    Wraps an unexpected exception raised while running an experiment, so
    that it is reported like any other failure.

    :param action str: the experiment that failed
    :param cause Exception: the original exception
    """
    def __init__(self, action, cause):
        self.error_type = type(cause).__name__
        super().__init__('%s: %s: %s' % (action, self.error_type, cause))
