"""Input checks shared by the estimators and the functional API."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ShapeError

MASS_TOL = 1e-9


def check_square_grid(grid) -> np.ndarray:
    arr = np.asarray(grid, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ShapeError(f"expected a non-empty square grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("grid contains non-finite values")
    return arr


def check_same_shape(p: np.ndarray, r: np.ndarray) -> None:
    if p.shape != r.shape:
        raise ShapeError(f"feature shapes differ: {p.shape} vs {r.shape}")


def check_unit_mass(a, tol: float = MASS_TOL) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if np.any(arr < 0):
        raise ValueError("features must be non-negative")
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"features must have unit mass, got {total!r}")
    return arr


def square_side(n_features: int) -> int:
    side = int(round(np.sqrt(n_features)))
    if side * side != n_features:
        raise ShapeError(f"{n_features} features do not form a square grid")
    return side


def check_feature_matrix(X) -> np.ndarray:
    """Two-dimensional float array of non-negative per-trial feature rows."""
    X = check_array(X, dtype=float, ensure_2d=False, allow_nd=True)
    if X.ndim > 2:
        X = X.reshape(X.shape[0], -1)
    if X.ndim != 2:
        raise ShapeError("expected one feature row per trial")
    if np.any(X < 0):
        raise ValueError("features must be non-negative")
    return X
