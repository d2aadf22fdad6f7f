"""Small input-validation helpers used at public API boundaries."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when a caller-supplied value violates an interface contract."""


def check_array(
    a: np.ndarray,
    name: str,
    shape: tuple[int, ...] | None = None,
    dtype: type | None = None,
) -> np.ndarray:
    if not isinstance(a, np.ndarray):
        raise ValidationError(f"{name} must be an ndarray, got {type(a).__name__}")
    if shape is not None and a.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {a.shape}")
    if dtype is not None and a.dtype != np.dtype(dtype):
        raise ValidationError(f"{name} must have dtype {np.dtype(dtype)}, got {a.dtype}")
    return a


def check_probability(x: float, name: str) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {x}")
    return x


def check_positive(x: float, name: str) -> float:
    if not x > 0:
        raise ValidationError(f"{name} must be positive, got {x}")
    return x


def check_count(x: int, name: str, minimum: int = 1) -> int:
    if not isinstance(x, (int, np.integer)) or x < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {x!r}")
    return int(x)


def check_index(i: int, n: int, name: str) -> int:
    if not 0 <= i < n:
        raise ValidationError(f"{name} out of range: {i} not in [0, {n})")
    return int(i)


def check_same_length(name_a: str, a, name_b: str, b) -> None:
    if len(a) != len(b):
        raise ValidationError(f"{name_a} and {name_b} must have equal length ({len(a)} != {len(b)})")
