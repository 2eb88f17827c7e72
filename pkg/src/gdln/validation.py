"""Input validation helpers used at public API boundaries."""

import numbers

import numpy as np

from .errors import InvalidParameterError, ShapeError


def check_array(a, name, ndim=None, dtype=float):
    """Coerce to a float ndarray and optionally enforce dimensionality."""
    arr = np.asarray(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_matrix(a, name, shape=None):
    arr = check_array(a, name, ndim=2)
    if shape is not None:
        expect = tuple(shape)
        got = arr.shape
        for e, g in zip(expect, got):
            if e is not None and e != g:
                raise ShapeError(f"{name} must have shape {expect}, got {got}")
    return arr


def check_scalar(x, name, minimum=None, maximum=None, strict_min=False):
    if not isinstance(x, numbers.Real) or isinstance(x, bool):
        raise InvalidParameterError(f"{name} must be a real number, got {x!r}")
    x = float(x)
    if not np.isfinite(x):
        raise InvalidParameterError(f"{name} must be finite, got {x!r}")
    if minimum is not None:
        if strict_min and x <= minimum:
            raise InvalidParameterError(f"{name} must be > {minimum}, got {x}")
        if not strict_min and x < minimum:
            raise InvalidParameterError(f"{name} must be >= {minimum}, got {x}")
    if maximum is not None and x > maximum:
        raise InvalidParameterError(f"{name} must be <= {maximum}, got {x}")
    return x


def check_int(x, name, minimum=None):
    if not isinstance(x, numbers.Integral) or isinstance(x, bool):
        raise InvalidParameterError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if minimum is not None and x < minimum:
        raise InvalidParameterError(f"{name} must be >= {minimum}, got {x}")
    return x


def check_power_of_two(x, name):
    x = check_int(x, name, minimum=2)
    if x & (x - 1):
        raise InvalidParameterError(f"{name} must be a power of two, got {x}")
    return x


def check_binary(a, name):
    """Validate that an array contains only 0/1 values."""
    arr = check_array(a, name)
    if not np.isin(arr, (0.0, 1.0)).all():
        raise InvalidParameterError(f"{name} must contain only 0/1 entries")
    return arr
