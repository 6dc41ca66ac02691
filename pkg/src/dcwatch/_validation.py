"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length, column_or_1d


def check_times(X):
    """Accept times as shape ``(n,)`` or ``(n, 1)``; return a float 1-D array."""
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single time column, got {X.shape[1]} columns")
        X = X[:, 0]
    return X


def check_time_series(X, y, sample_weight=None):
    t = check_times(X)
    y = column_or_1d(check_array(y, ensure_2d=False, dtype=np.float64), warn=True)
    check_consistent_length(t, y)
    if sample_weight is None:
        return t, y, None
    w = column_or_1d(check_array(sample_weight, ensure_2d=False, dtype=np.float64))
    check_consistent_length(t, w)
    if (w <= 0).any():
        raise ValueError("sample weights must be positive")
    return t, y, w


def check_band_pairs(X):
    """Rows of ``[nir, red]`` reflectance; NaN allowed for missing pixels."""
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan")
    if X.shape[1] != 2:
        raise ValueError(f"expected 2 columns (nir, red), got {X.shape[1]}")
    return X
