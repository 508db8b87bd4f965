"""Input validation shared by the estimator classes."""

import numpy as np
from sklearn.utils.validation import check_array

from .likelihood import LikelihoodKind


def check_kind(kind):
    try:
        return LikelihoodKind(str(kind).lower())
    except ValueError:
        raise ValueError(f"kind must be 'gaussian' or 'laplacian', got {kind!r}") from None


def check_landmark_samples(X):
    """Validate an ``(n, 2)`` array of labelled locations.

    A row of two NaNs marks an invisible sample. Returns ``(X, visible_mask)``.
    """
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
    if X.shape[1] != 2:
        raise ValueError(f"expected 2 columns (x, y), got {X.shape[1]}")
    nan = np.isnan(X)
    partial = nan.any(axis=1) & ~nan.all(axis=1)
    if partial.any():
        raise ValueError(f"row {int(np.flatnonzero(partial)[0])} has exactly one NaN coordinate")
    if np.isinf(X).any():
        raise ValueError("locations must be finite or NaN")
    return X, ~nan.any(axis=1)


def check_heatmaps(X):
    """Validate a stack of heatmaps of shape ``(n, height, width)``; a single 2D map is promoted."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    X = check_array(X, allow_nd=True, ensure_min_samples=1)
    if X.ndim != 3:
        raise ValueError(f"expected heatmaps of shape (n, height, width), got {X.shape}")
    return X
