"""scikit-learn compatible wrappers around the series numerics.

Times go in ``X`` (shape ``(n,)`` or ``(n, 1)``, days since an epoch) and
values in ``y``, so the models slot into pipelines, ``clone`` and
``get_params``/``set_params`` like any other estimator.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_band_pairs, check_time_series, check_times
from .indices import ndvi_array
from .timeseries import (
    CONDITION_LIMIT,
    ObservationSeries,
    _harmonic_lstsq,
    mann_kendall,
    ols_slope,
    predict,
)

__all__ = ["HarmonicRegressor", "MannKendallTrend", "OLSTrend", "NDVITransformer"]


class HarmonicRegressor(RegressorMixin, BaseEstimator):
    """Single-harmonic seasonal regression, optionally with a linear trend.

    Parameters
    ----------
    period_days : float, default=365.0
        Length of the seasonal cycle.
    include_trend : bool, default=False
        Add a ``beta * t`` column to the design.
    condition_limit : float, default=1e10
        Largest accepted condition number of the equilibrated design.

    Attributes
    ----------
    fit_ : HarmonicFit
    coef_ : ndarray of shape (3,) or (4,)
        ``[mu, alpha1, alpha2(, beta)]``.
    """

    def __init__(self, period_days=365.0, include_trend=False, condition_limit=CONDITION_LIMIT):
        self.period_days = period_days
        self.include_trend = include_trend
        self.condition_limit = condition_limit

    def fit(self, X, y, sample_weight=None):
        t, y, w = check_time_series(X, y, sample_weight)
        self.fit_ = _harmonic_lstsq(t, y, w, self.include_trend, self.period_days, self.condition_limit)
        self.coef_ = np.array(list(self.fit_.coefficients().values()))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return np.asarray(predict(self.fit_, check_times(X)), dtype=float)


class _TrendEstimator(BaseEstimator):
    _method = None

    def __init__(self, alpha=0.05):
        self.alpha = alpha

    def fit(self, X, y):
        t, y, _ = check_time_series(X, y)
        self.result_ = type(self)._method(ObservationSeries("other", t, y), alpha=self.alpha)
        self.slope_ = self.result_.slope
        self.intercept_ = self.result_.intercept
        self.p_value_ = self.result_.p_value
        self.direction_ = self.result_.direction.value
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return self.intercept_ + self.slope_ * check_times(X)


class MannKendallTrend(_TrendEstimator):
    """Mann-Kendall test; ``predict`` evaluates the Sen line."""

    _method = staticmethod(mann_kendall)


class OLSTrend(RegressorMixin, _TrendEstimator):
    """Least-squares line with a t-test on the slope."""

    _method = staticmethod(ols_slope)


class NDVITransformer(TransformerMixin, BaseEstimator):
    """Map ``[nir, red]`` rows to NDVI; undefined pixels become NaN."""

    def fit(self, X, y=None):
        check_band_pairs(X)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        X = check_band_pairs(X)
        return ndvi_array(X[:, 0], X[:, 1]).reshape(-1, 1)

    def get_feature_names_out(self, input_features=None):
        return np.array(["ndvi"], dtype=object)
