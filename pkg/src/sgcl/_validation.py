"""Input validation helpers used at public API boundaries."""

import numbers

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

FLOAT = np.float32


def check_matrix(x, name="x", dtype=FLOAT, allow_empty_cols=False):
    """Return ``x`` as a C-contiguous 2-D array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(x, dtype=dtype)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[1] == 0 and not allow_empty_cols:
        raise DimensionError(f"{name} has no columns")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def check_rows(x, n_rows, name="x"):
    if x.shape[0] != n_rows:
        raise DimensionError(f"{name} has {x.shape[0]} rows, expected {n_rows}")


def check_same_shape(a, b, names=("a", "b")):
    if a.shape != b.shape:
        raise DimensionError(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")


def check_finite(x, name="x"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} contains non-finite entries")


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    if low is not None and (value < low or (low_open and value == low)):
        raise ConfigError(f"{name}={value} is below the allowed range")
    if high is not None and (value > high or (high_open and value == high)):
        raise ConfigError(f"{name}={value} is above the allowed range")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value
