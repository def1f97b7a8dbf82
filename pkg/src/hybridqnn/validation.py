"""Input validation for the estimator front end."""
from __future__ import annotations

import math

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ConfigurationError, EncodingDomainError, ShapeError


def check_images(X, input_size=None) -> np.ndarray:
    """Coerce ``X`` to ``(N, 1, H, H)`` float64 with pixels in ``[0, 1)``.

    Accepts ``(N, H*H)`` flat rows, ``(N, H, H)`` or ``(N, 1, H, H)``.
    """
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_min_samples=1)
    if X.ndim == 2:
        side = math.isqrt(X.shape[1])
        if side * side != X.shape[1]:
            raise ShapeError(f"flat rows of {X.shape[1]} pixels are not square images")
        X = X.reshape(len(X), 1, side, side)
    elif X.ndim == 3:
        X = X[:, None]
    elif X.ndim != 4 or X.shape[1] != 1:
        raise ShapeError(f"expected single-channel images, got array of shape {X.shape}")
    if X.shape[2] != X.shape[3]:
        raise ShapeError(f"images must be square, got {X.shape[2]}x{X.shape[3]}")
    if input_size is not None and X.shape[2] != input_size:
        raise ShapeError(f"estimator was fitted on {input_size}x{input_size} images, got {X.shape[2]}")
    if X.min() < 0.0 or X.max() >= 1.0:
        raise EncodingDomainError(f"pixels must lie in [0, 1), got [{X.min()}, {X.max()}]")
    return X


def check_labels(y, n_samples: int, max_classes: int = 4):
    """Returns ``(classes, encoded)`` where ``encoded`` indexes into ``classes``."""
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ShapeError(f"expected {n_samples} labels in a 1-D array, got shape {y.shape}")
    classes, encoded = np.unique(y, return_inverse=True)
    if not 2 <= classes.size <= max_classes:
        raise ConfigurationError(f"need between 2 and {max_classes} classes, got {classes.size}")
    return classes, encoded
