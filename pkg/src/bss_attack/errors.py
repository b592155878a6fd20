"""Exception hierarchy shared by every module of the toolkit."""


class BssError(Exception):
    """Base class for all toolkit errors."""


class RangeError(BssError, IndexError):
    pass


class ShapeError(BssError, ValueError):
    pass


class ArgumentError(BssError, ValueError):
    pass


class ConfigError(BssError, ValueError):
    pass


class SamplingError(BssError, RuntimeError):
    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class DegenerateError(BssError, ValueError):
    pass


class InfeasibleError(BssError, ValueError):
    pass


class NumericError(BssError, FloatingPointError):
    pass


class TrainingError(NumericError):
    pass


class FormatError(BssError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
