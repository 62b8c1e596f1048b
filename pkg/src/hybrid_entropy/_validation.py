"""Input validation helpers shared by the public modules."""

from __future__ import annotations

import math

import numpy as np


class ParameterError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class UnsupportedDimensionError(ParameterError):
    """Raised when an operation is only defined for low dimensions."""


def check_finite_scalar(value, name: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value}")
    return value


def check_open_unit(value, name: str) -> float:
    value = check_finite_scalar(value, name)
    if not 0.0 < value < 1.0:
        raise ParameterError(f"{name} must lie in (0, 1), got {value}")
    return value


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or int(value) != value:
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_vector(values, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ParameterError(f"{name} must be a vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ParameterError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    return arr


def check_spd(matrix, name: str, dimension: int | None = None) -> np.ndarray:
    """Validate a symmetric positive-definite matrix and return its Cholesky factor."""
    arr = np.atleast_2d(np.asarray(matrix, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ParameterError(f"{name} must be a square matrix, got shape {arr.shape}")
    if dimension is not None and arr.shape[0] != dimension:
        raise ParameterError(f"{name} must be {dimension}x{dimension}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains non-finite entries")
    if np.max(np.abs(arr - arr.T), initial=0.0) > 1e-12:
        raise ParameterError(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(arr)
    except np.linalg.LinAlgError as exc:
        raise ParameterError(f"{name} is not positive definite") from exc


def check_weights(weights, name: str = "weights") -> np.ndarray:
    w = check_vector(weights, name)
    if w.size == 0:
        raise ParameterError(f"{name} must be non-empty")
    if np.any(w < 0):
        raise ParameterError(f"{name} must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ParameterError(f"{name} must sum to 1 (got {w.sum()!r})")
    return w


def check_dimension(d: int, allowed, operation: str) -> None:
    if d not in allowed:
        raise UnsupportedDimensionError(
            f"{operation} supports dimension in {sorted(allowed)}, got {d}"
        )
