"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import InputError, ParameterError


def check_finite_array(values, name="values", ndim=None):
    """Convert to a float array and reject NaN/Inf."""
    arr = np.asarray(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def check_state(v, d=None, name="state"):
    arr = np.atleast_1d(check_finite_array(v, name))
    if arr.ndim != 1:
        raise InputError(f"{name} must be a vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise InputError(f"{name} has dimension {arr.shape[0]}, expected {d}")
    return arr


def check_scalar(x, name, *, lower=None, upper=None, lower_inclusive=True,
                 upper_inclusive=True, integer=False):
    """Validate a scalar parameter and return it as float (or int).

    Bounds violations raise :class:`ParameterError` with a message naming
    the parameter, e.g. ``"epsilon must be positive"``.
    """
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(x, bool) or not isinstance(x, kind):
        raise ParameterError(f"{name} must be {'an integer' if integer else 'a real number'}")
    if not np.isfinite(x):
        raise ParameterError(f"{name} must be finite")
    if lower is not None:
        bad = x < lower if lower_inclusive else x <= lower
        if bad:
            if lower == 0 and not lower_inclusive:
                raise ParameterError(f"{name} must be positive")
            op = ">=" if lower_inclusive else ">"
            raise ParameterError(f"{name} must be {op} {lower}, got {x}")
    if upper is not None:
        bad = x > upper if upper_inclusive else x >= upper
        if bad:
            op = "<=" if upper_inclusive else "<"
            raise ParameterError(f"{name} must be {op} {upper}, got {x}")
    return int(x) if integer else float(x)


def check_same_grid(a, b):
    if a.grid != b.grid:
        raise InputError("trajectories live on different time grids")
