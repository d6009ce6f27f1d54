"""Exception hierarchy shared by the simulator, learner and CLI."""


class IrsError(Exception):
    """Base class for all errors raised by irsdl."""


class ConfigError(IrsError, ValueError):
    """Bad configuration key or value."""


class DimensionError(IrsError, ValueError):
    """Array shapes or protocol parameters are inconsistent."""


class NumericalError(IrsError, ArithmeticError):
    """A numerical procedure cannot produce a meaningful result."""


class SingularObservationError(NumericalError):
    """The pilot observation matrix does not identify the stacked channel."""
