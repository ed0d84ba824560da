"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` so the command-line frontend can map
failures to distinct process statuses without a lookup table of its own.
"""


class ArdError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(ArdError):
    """Invalid or incomplete configuration (missing gas coefficient, bad tau, ...)."""

    exit_code = 3


class DomainError(ArdError, ValueError):
    """An input lies outside the domain an operation accepts."""

    exit_code = 4


class GeometryError(DomainError):
    """Solar/view geometry is degenerate (cosine products too small)."""

    exit_code = 4


class NonphysicalSurfaceError(DomainError):
    """The coupling denominator ``1 - S * rho_s`` is not positive."""

    exit_code = 4


class LutBuildError(ArdError):
    """A LUT node could not be evaluated by the forward model."""

    exit_code = 5


class OutOfHullError(ArdError):
    """A LUT query lies outside the table axes and clamping is disabled."""

    exit_code = 5

    def __init__(self, axis, value, lo, hi):
        self.axis = axis
        self.value = value
        super().__init__(f"query {axis}={value!r} outside LUT hull [{lo}, {hi}]")


class IncompatibleTableError(ArdError):
    """A LUT file is truncated, corrupt, of another version or another model."""

    exit_code = 6


class RasterFormatError(ArdError):
    """A raster container or its sidecar is missing, malformed or inconsistent."""

    exit_code = 6


class ShapeMismatchError(ArdError, ValueError):
    """Arrays, chips or label sets that must align do not."""

    exit_code = 7
