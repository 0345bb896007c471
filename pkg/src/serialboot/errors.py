"""Exception types raised across the package."""


class SerialBootError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SerialBootError, ValueError):
    pass


class DegenerateInput(SerialBootError, ValueError):
    pass


class FactorizationError(SerialBootError, ArithmeticError):
    pass


class NoRootError(SerialBootError, ArithmeticError):
    pass


class QuadratureError(SerialBootError, ArithmeticError):
    """Adaptive quadrature did not reach its tolerance.

    The best estimate and its error bound are kept so callers can decide
    whether the result is still usable.
    """

    def __init__(self, message, estimate=None, error=None, index=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
        self.index = index


class SaddleError(SerialBootError, ArithmeticError):
    """The saddlepoint equation could not be solved."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics
