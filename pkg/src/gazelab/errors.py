"""Exception hierarchy shared by every gazelab module."""


class GazeLabError(Exception):
    """Base class for all errors raised by gazelab."""


class ShapeError(GazeLabError, ValueError):
    """Tensor extents do not satisfy an operation's contract."""


class NumericError(GazeLabError, ArithmeticError):
    """A non-finite value appeared in an input, a gradient or a loss."""


class DomainError(GazeLabError, ValueError):
    """An argument is outside the domain where the result is defined."""


class ConfigError(GazeLabError, ValueError):
    """Invalid network, training, or dataset configuration."""


class StateError(GazeLabError, RuntimeError):
    """An object was used out of order, e.g. a stale activation cache."""


class ParseError(GazeLabError, ValueError):
    """A file could not be decoded."""
