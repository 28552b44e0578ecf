"""Exception types raised across the package."""


class HermiteSpacesError(Exception):
    """Base class for all package errors."""


class ValidationError(HermiteSpacesError, ValueError):
    """Invalid parameters or malformed input files."""


class ConstraintError(ValidationError):
    """A parameter constraint required by an inequality probe is violated."""


class ResourceError(HermiteSpacesError):
    """A configured size cap (multi-indices, arrangement cells, panels) was exceeded."""


class ConvergenceError(HermiteSpacesError):
    """An iterative numerical procedure failed to converge."""


class ZeroFinderError(ConvergenceError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class QuadratureError(ConvergenceError):
    """Adaptive quadrature hit its panel cap before meeting the tolerance."""


class CalibrationError(HermiteSpacesError, ValueError):
    """A multiplier system cannot meet the requested lower-bound constant."""
