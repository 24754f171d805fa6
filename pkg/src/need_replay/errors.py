"""Exception types raised across the package."""


class NeedReplayError(Exception):
    """Base class for all errors raised by need_replay."""


class ContractViolation(NeedReplayError, ValueError):
    """An argument broke a documented precondition (e.g. a negative priority)."""


class EmptyQueueError(NeedReplayError, IndexError):
    pass


class NoMassError(NeedReplayError, RuntimeError):
    """Sampling was requested from a sampler whose total mass is zero."""


class NumericalError(NeedReplayError, ArithmeticError):
    pass


class ShapeError(NeedReplayError, ValueError):
    pass


class DegenerateFeatureError(NeedReplayError, ZeroDivisionError):
    """Projection onto a zero-norm feature vector."""


class UnreachableError(NeedReplayError, RuntimeError):
    pass


class InsufficientDataError(NeedReplayError, RuntimeError):
    pass


class ConfigError(NeedReplayError, ValueError):
    """Invalid experiment configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
