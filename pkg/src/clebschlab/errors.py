"""Exception types raised by the numerical kernels."""

import numpy as np


class ClebschLabError(Exception):
    pass


class DegreeError(ClebschLabError, ValueError):
    """Form degree out of range for the requested operation."""


class DimensionError(ClebschLabError, ValueError):
    pass


class DomainError(ClebschLabError, ValueError):
    pass


class CausalityError(ClebschLabError, ValueError):
    """A velocity reached or exceeded the speed of light."""


class UnphysicalEnthalpyError(ClebschLabError, ValueError):
    pass


class _PointError(ClebschLabError):
    def __init__(self, message, point=None):
        self.point = None if point is None else np.asarray(point, dtype=float)
        if point is not None:
            message = f"{message} at point {np.array2string(self.point, precision=6)}"
        super().__init__(message)


class SingularStateError(_PointError, ValueError):
    """Momentum 1-form is not timelike, so no enthalpy/proper velocity exists."""


class TrajectoryEscapeError(_PointError, RuntimeError):
    """A trajectory left the domain on which its vector field is defined."""


class PullbackDegeneracyError(_PointError, RuntimeError):
    pass


class DegenerateDensityError(_PointError, ZeroDivisionError):
    pass


class FixedPointError(ClebschLabError, RuntimeError):
    pass


class ConfigError(ClebschLabError, ValueError):
    pass
