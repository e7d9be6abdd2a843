"""Exception types shared across the package."""


class SpecwbError(Exception):
    """Base class for all data and processing errors raised by specwb."""


class GridError(SpecwbError):
    """Invalid wavelength grid (non-monotone, NaN, dimension mismatch)."""


class SelectionError(SpecwbError):
    """A subset, mask or band lookup selected nothing usable."""


class FormatError(SpecwbError):
    """A file could not be parsed (CSV table or ENVI header/data)."""


class ExpressionError(SpecwbError):
    """Band-math expression could not be parsed or evaluated."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class FitError(SpecwbError):
    """A model fit failed or did not converge."""
