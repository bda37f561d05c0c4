"""Small input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_array_2d(x, name="X", dtype=float):
    """Coerce to a 2-D float array with finite entries."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_labels(y, n_classes, name="y"):
    """Coerce to a 1-D integer label array with values in [0, n_classes)."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError(f"{name} must contain integer labels")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise ValueError(
            f"{name} labels must lie in [0, {n_classes}), "
            f"got range [{arr.min()}, {arr.max()}]"
        )
    return arr


def check_equal_length(a, b, name_a="true labels", name_b="predicted labels"):
    if len(a) != len(b):
        raise ValueError(
            f"length mismatch: {name_a} has {len(a)} entries, "
            f"{name_b} has {len(b)}"
        )


def check_row_stochastic(matrix, name, atol=1e-9):
    """Verify rows are nonnegative and sum to 1 within tolerance."""
    m = np.asarray(matrix, dtype=float)
    if np.any(m < 0):
        raise ValueError(f"{name} has negative entries")
    sums = m.sum(axis=-1)
    if not np.allclose(sums, 1.0, atol=atol, rtol=0.0):
        raise ValueError(f"{name} rows do not sum to 1 (sums: {sums})")
    return m
