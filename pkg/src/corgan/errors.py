"""Exception types shared across the package."""


class CorganError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(CorganError, ValueError):
    """Operand shapes are incompatible for an operation."""


class NumericError(CorganError, ArithmeticError):
    """A forward or backward pass produced NaN or Inf."""


class GraphStateError(CorganError, RuntimeError):
    """A graph method was called out of order (e.g. backward before forward)."""


class ConfigurationError(CorganError, ValueError):
    """Inconsistent model, training, or command configuration."""


class ParseError(CorganError, ValueError):
    """A data or checkpoint file is malformed."""
