"""Input validation helpers shared across the package."""

import numpy as np


def check_array(x, shape=None, name="array") -> np.ndarray:
    """Coerce to a float64 ndarray, optionally enforcing a shape.

    Raises ValueError on non-finite entries or shape mismatch.
    """
    arr = np.asarray(x, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_quaternion(q, name="quaternion") -> np.ndarray:
    """Coerce to a finite (4,) float array in [w, x, y, z] order."""
    return check_array(q, shape=(4,), name=name)


def check_unit_quaternion(q, tol=1e-6, name="quaternion") -> np.ndarray:
    """Like check_quaternion but also require unit norm within tol."""
    arr = check_quaternion(q, name=name)
    norm = np.linalg.norm(arr)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{name} must be unit-norm, got ||q|| = {norm}")
    return arr


def check_vector3(v, name="vector") -> np.ndarray:
    """Coerce to a finite (3,) float array."""
    return check_array(v, shape=(3,), name=name)


def check_image(img, min_size=2, name="image") -> np.ndarray:
    """Coerce to a 2D float array with both dimensions >= min_size."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got ndim={arr.ndim}")
    if min(arr.shape) < min_size:
        raise ValueError(
            f"{name} must be at least {min_size}x{min_size}, got {arr.shape}"
        )
    return arr


def check_same_shape(a, b, name_a="first image", name_b="second image"):
    if a.shape != b.shape:
        raise ValueError(
            f"{name_a} shape {a.shape} != {name_b} shape {b.shape}"
        )
