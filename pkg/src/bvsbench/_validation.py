"""Exceptions and small input-checking helpers shared by all modules."""
from __future__ import annotations

import numbers

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a sensor, scene or run configuration cannot be honoured."""


class InsufficientDataError(ValueError):
    """Raised when an estimator has too little support to produce a value."""


class NoEdgeFoundError(ValueError):
    """Raised by the thickness metric when the profile has no significant peak."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver hits its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def check_plane(image, name="image", min_shape=(1, 1), dtype=np.float64):
    """Return `image` as a finite 2-D float array, raising ValueError otherwise."""
    arr = np.asarray(image, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_shape[0] or arr.shape[1] < min_shape[1]:
        raise ValueError(f"{name} must be at least {min_shape[0]}x{min_shape[1]}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) and value != np.inf:
        raise ConfigurationError(f"{name} must be a real number, got {value!r}")
    if strict and not value > 0:
        raise ConfigurationError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ConfigurationError(f"{name} must be >= 0, got {value!r}")
    return value


def check_resolution(resolution):
    try:
        w, h = (int(v) for v in resolution)
    except (TypeError, ValueError):
        raise ConfigurationError(f"resolution must be a (width, height) pair, got {resolution!r}") from None
    if w <= 0 or h <= 0:
        raise ConfigurationError(f"resolution must be positive, got {resolution!r}")
    return w, h


def as_points(points):
    """Coerce a point list to an (N, 2) float array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 2))
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 2:
        raise ValueError(f"points must have shape (N, 2), got {arr.shape}")
    return arr.reshape(-1, 2)
