import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from dcwatch.errors import RankDeficient
from dcwatch.estimators import HarmonicRegressor, MannKendallTrend, NDVITransformer, OLSTrend
from dcwatch.indices import ndvi_array
from dcwatch.timeseries import ObservationSeries, fit_harmonic, mann_kendall, ols_slope


@pytest.fixture
def seasonal(rng):
    t = np.sort(rng.uniform(0, 2000, 90))
    y = 0.5 + 0.2 * np.cos(2 * np.pi * t / 365) - 1e-5 * t + rng.normal(0, 0.01, 90)
    return t, y


def test_params_and_clone():
    est = HarmonicRegressor(period_days=360, include_trend=True)
    assert est.get_params() == {"period_days": 360, "include_trend": True, "condition_limit": 1e10}
    est.set_params(period_days=365.25)
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    assert MannKendallTrend(alpha=0.1).get_params() == {"alpha": 0.1}


@pytest.mark.parametrize("est", [HarmonicRegressor(), MannKendallTrend(), OLSTrend()])
def test_not_fitted(est):
    with pytest.raises(NotFittedError):
        est.predict([1.0, 2.0])


@pytest.mark.parametrize("trend", [False, True])
def test_harmonic_matches_functional(seasonal, trend):
    t, y = seasonal
    est = HarmonicRegressor(include_trend=trend).fit(t.reshape(-1, 1), y)
    ref = fit_harmonic(ObservationSeries("ndvi", t, y), include_trend=trend)
    np.testing.assert_allclose(est.coef_, list(ref.coefficients().values()), rtol=1e-12, atol=1e-15)
    assert est.score(t, y) > 0.99
    assert est.predict(t).shape == (90,)


def test_harmonic_rank_deficient():
    with pytest.raises(RankDeficient):
        HarmonicRegressor().fit(np.full(6, 7.0), np.arange(6.0))


def test_harmonic_rejects_bad_input():
    with pytest.raises(ValueError):
        HarmonicRegressor().fit(np.ones((5, 2)), np.ones(5))
    with pytest.raises(ValueError):
        HarmonicRegressor().fit(np.arange(5.0), np.ones(5), sample_weight=np.zeros(5))
    with pytest.raises(ValueError):
        HarmonicRegressor().fit(np.arange(5.0), [1, 2, np.nan, 4, 5])


def test_trend_estimators(seasonal):
    t, y = seasonal
    s = ObservationSeries("ndvi", t, y)
    mk = MannKendallTrend().fit(t, y)
    assert mk.result_ == mann_kendall(s)
    ols = OLSTrend(alpha=0.01).fit(t, y)
    ref = ols_slope(s, alpha=0.01)
    assert ols.slope_ == ref.slope and ols.direction_ == ref.direction.value
    assert ols.predict([0.0])[0] == pytest.approx(ref.intercept)


def test_ndvi_transformer_in_pipeline(rng):
    X = rng.uniform(0, 1, (50, 2))
    X[0] = 0
    out = make_pipeline(NDVITransformer()).fit_transform(X)
    assert out.shape == (50, 1)
    np.testing.assert_array_equal(out[:, 0], ndvi_array(X[:, 0], X[:, 1]))
    assert np.isnan(out[0, 0])
    assert list(NDVITransformer().get_feature_names_out()) == ["ndvi"]
    with pytest.raises(ValueError):
        NDVITransformer().fit(np.ones((3, 3)))
