"""Input validation helpers shared by the estimators and the functional API."""

import numpy as np


class ShapeError(ValueError):
    """Raised when paired grids do not have matching dimensions."""


def check_mask(mask, name="mask"):
    """Return ``mask`` as an ``int8`` array, rejecting values other than 0/1."""
    arr = np.asarray(mask)
    if arr.ndim < 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty grid")
    if arr.dtype == bool:
        return arr.astype(np.int8)
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(np.int8)


def check_probs(probs, name="probs"):
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim < 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty grid")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def check_same_shape(a, b, names=("pred", "truth")):
    if np.shape(a) != np.shape(b):
        raise ShapeError(
            f"{names[0]} has shape {np.shape(a)} but {names[1]} has shape {np.shape(b)}"
        )


def check_images(X, min_size=3):
    """Coerce ``X`` to a float64 ``(n, h, w)`` batch of gray images."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (n, h, w) images, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("empty image batch")
    if arr.shape[1] < min_size or arr.shape[2] < min_size:
        raise ValueError(
            f"images must be at least {min_size}x{min_size}, got {arr.shape[1]}x{arr.shape[2]}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("images contain non-finite values")
    return arr


def check_image_mask_batch(X, y):
    X = check_images(X)
    y = check_mask(y, "y")
    if y.ndim == 2:
        y = y[None]
    check_same_shape(X, y, ("X", "y"))
    return X, y
