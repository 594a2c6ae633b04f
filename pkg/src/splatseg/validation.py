"""Input validation helpers, in the spirit of sklearn's check_array."""

from __future__ import annotations

import numpy as np

from .errors import DataError

ROTATION_TOL = 1e-9


def check_rotation(matrix, tol: float = ROTATION_TOL) -> np.ndarray:
    """Validate a proper rotation: R.T @ R = I and det(R) = +1 within tol."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (3, 3):
        raise DataError(f"rotation must be 3x3, got {matrix.shape}")
    if not np.allclose(matrix.T @ matrix, np.eye(3), atol=tol, rtol=0.0):
        raise DataError("rotation is not orthonormal")
    if abs(np.linalg.det(matrix) - 1.0) > tol:
        raise DataError("rotation determinant is not +1")
    return matrix


def check_depth_image(depth) -> np.ndarray:
    """Validate an H x W depth raster: NaN = empty, all other values > 0."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise DataError(f"depth image must be 2-D, got shape {depth.shape}")
    finite = depth[np.isfinite(depth)]
    if finite.size and finite.min() <= 0.0:
        raise DataError("depth values must be positive")
    return depth


def check_score_map(scores, height: int, width: int, n_channels: int = 9) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float32)
    if scores.shape != (height, width, n_channels):
        raise DataError(
            f"score map shape {scores.shape} does not match "
            f"({height}, {width}, {n_channels})"
        )
    if not np.isfinite(scores).all():
        raise DataError("score map contains non-finite values")
    return scores


def check_positive(name: str, value) -> float:
    if not value > 0:
        raise DataError(f"{name} must be positive, got {value}")
    return float(value)


def check_non_negative(name: str, value) -> float:
    if value < 0:
        raise DataError(f"{name} must be non-negative, got {value}")
    return float(value)
