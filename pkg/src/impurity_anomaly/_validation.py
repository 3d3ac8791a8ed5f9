"""Input validation shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidInputError


def check_features(X, min_samples: int = 1) -> np.ndarray:
    """Validate an ``(n, 5)`` impurity feature matrix
    (``min_x, min_y, max_x, max_y, area``)."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples)
    if X.shape[1] != 5:
        raise InvalidInputError(f"expected 5 feature columns, got {X.shape[1]}")
    if np.any(X[:, 0] > X[:, 2]) or np.any(X[:, 1] > X[:, 3]):
        raise InvalidInputError("rectangle rows must satisfy min <= max")
    if np.any(X[:, 4] <= 0):
        raise InvalidInputError("impurity areas must be positive")
    return X


def check_unit_scores(scores, n: int, name: str = "scores") -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.shape[0] != n:
        raise InvalidInputError(f"{name}: expected {n} values, got {s.shape[0]}")
    if not np.all(np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise InvalidInputError(f"{name} must lie in [0, 1]")
    return s


def check_images(X, size: int = 100) -> np.ndarray:
    """Validate a stack of square single-channel images, returned as float32
    in [0, 1] with shape ``(n, size, size)``."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (size, size):
        raise InvalidInputError(f"expected images of shape (n, {size}, {size}), got {X.shape}")
    X = X.astype(np.float32)
    if X.size and X.max() > 1.0:
        X = X / 255.0
    return X
