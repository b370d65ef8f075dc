"""Exception hierarchy shared by the library and the command line."""


class FracLabError(Exception):
    """Base class for all errors raised by fraclap_lab."""

    exit_code = 1


class ParameterError(FracLabError, ValueError):
    """A numeric parameter is outside its documented range."""


class ConfigurationError(ParameterError):
    """Incompatible combination of grid or run parameters."""


class ResolutionError(ParameterError):
    """A length scale is too small for the grid spacing."""


class GeometryError(FracLabError):
    """Empty region or empty set of admissible directions."""


class AdmissibilityError(FracLabError):
    """A translation would move mass into the exterior of the domain."""


class NumericError(FracLabError, ArithmeticError):
    """A non-finite value appeared in an intermediate quantity."""


class ConvergenceError(FracLabError):
    """The optimizer exhausted its iteration budget.

    The partial iteration log is kept on the exception so callers can
    inspect how far the descent got.
    """

    exit_code = 2

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class MeasurementError(FracLabError):
    """Too few usable samples to fit a regularity exponent."""

    exit_code = 3
