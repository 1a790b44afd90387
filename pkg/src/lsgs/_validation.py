import math
import numbers

import numpy as np

from .exceptions import ConfigurationError, DimensionError, ValidationError


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not math.isfinite(value) or value <= 0:
        raise ConfigurationError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_unit_interval(value, name):
    if not isinstance(value, numbers.Real) or not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


def check_vector(x, name, allow_column=False):
    """1-d finite float64 copy of ``x``; ``(K, 1)`` accepted when ``allow_column``."""
    arr = np.array(x, dtype=np.float64)
    if allow_column and arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-d, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} must not be empty")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_probability_vector(p, name="p", atol=1e-12):
    p = check_vector(p, name)
    if (p < 0).any():
        raise ValidationError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > atol:
        raise ValidationError(f"{name} sums to {p.sum()!r}, not 1")
    return p
