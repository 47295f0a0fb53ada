from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from hptes.forecast import (INTERPOLATED, SARIMA_COMBINED, DemandForecast, ForecastError,
                            SarimaFitError, SarimaSpec, fit_sarima, forecast_combined,
                            interpolate_hourly)


# ---------------------------------------------------------------------------
# Hourly interpolation
# ---------------------------------------------------------------------------

def test_constant_hourly_use_gives_constant_minute_profile():
    fc = interpolate_hourly([60.0] * 5, out_step=60.0)
    assert len(fc) == 300
    np.testing.assert_allclose(fc.values * 60.0, 1.0)  # 1 L per minute
    assert set(fc.provenance) == {INTERPOLATED}


def test_hourly_impulse_peaks_inside_middle_hour():
    fc = interpolate_hourly([0.0, 120.0, 0.0], out_step=60.0)
    lph = fc.litres_per_hour
    peak = int(np.argmax(lph))
    assert 60 <= peak < 120
    rising, falling = np.diff(lph[: peak + 1]), np.diff(lph[peak:])
    assert np.all(rising >= -1e-12) and np.all(falling <= 1e-12)
    # the cubic-spline reference through the same knots peaks in the same hour
    t = (np.arange(180) + 0.5) * 60.0
    spline = CubicSpline([1800.0, 5400.0, 9000.0], [0.0, 120.0, 0.0])(t)
    assert 60 <= int(np.argmax(spline)) < 120
    assert np.all(lph >= 0.0)


def test_hourly_volume_ratio_is_reported():
    fc = interpolate_hourly([10.0, 50.0, 200.0, 40.0, 0.0, 30.0], out_step=300.0)
    ratio = fc.meta["volume_ratio"]
    assert ratio.shape == (6,)
    assert np.all(np.isfinite(ratio[[0, 1, 2, 3, 5]]))


@pytest.mark.parametrize("bad", [[], [5.0]])
def test_interpolation_needs_two_points(bad):
    with pytest.raises(ForecastError):
        interpolate_hourly(bad)


def test_interpolation_rejects_negative_readings():
    with pytest.raises(ForecastError):
        interpolate_hourly([5.0, -1.0, 3.0])


def test_forecast_values_are_clamped_and_tagged():
    fc = DemandForecast(0.0, 60.0, [-1.0, 0.5, 2.0])
    np.testing.assert_array_equal(fc.values, [0.0, 0.5, 2.0])
    with pytest.raises(ForecastError):
        DemandForecast(0.0, 60.0, [1.0, 2.0], ("measured",) * 3)


def test_resample_averages_blocks():
    fc = DemandForecast(0.0, 60.0, np.arange(10.0))
    coarse = fc.resample(300.0)
    np.testing.assert_allclose(coarse.values, [2.0, 7.0])
    with pytest.raises(ForecastError):
        fc.resample(90.0)


# ---------------------------------------------------------------------------
# SARIMA
# ---------------------------------------------------------------------------

def test_seasonal_random_walk_predicts_last_season():
    rng = np.random.default_rng(0)
    S, sigma = 24, 0.3
    y = np.zeros(24 * 30)
    y[:S] = rng.normal(5, 1, S)
    for t in range(S, y.size):
        y[t] = y[t - S] + rng.normal(0, sigma)
    fitted = fit_sarima(y[:-S], (0, 0, 0), (0, 1, 0, S))
    fc = fitted.forecast(y[:-S], S)
    np.testing.assert_allclose(fc, y[-2 * S:-S])
    mae = np.mean(np.abs(fc - y[-S:]))
    assert 0.5 * sigma < mae < 1.5 * sigma


def test_white_noise_forecast_is_sample_mean():
    y = np.random.default_rng(1).normal(3.0, 1.0, 200)
    fitted = fit_sarima(y, (0, 0, 0), (0, 0, 0, 12))
    np.testing.assert_allclose(fitted.forecast(y, 10), y.mean())


def test_ar1_coefficient_recovered():
    rng = np.random.default_rng(2)
    e = rng.normal(0, 1, 2000)
    y = np.zeros(2000)
    for t in range(1, 2000):
        y[t] = 0.8 * y[t - 1] + e[t]
    fitted = fit_sarima(y, (1, 0, 0), (0, 0, 0, 1))
    assert abs(fitted.ar[0] - 0.8) < 0.1
    # second route: exact Gaussian likelihood from statsmodels
    sm = pytest.importorskip("statsmodels.tsa.arima.model")
    ref = sm.ARIMA(y, order=(1, 0, 0)).fit()
    assert abs(fitted.ar[0] - ref.arparams[0]) < 0.01


def test_fit_rejects_short_history():
    with pytest.raises(ForecastError):
        fit_sarima(np.ones(50), (1, 0, 0), (1, 1, 0, 24))


def test_fitted_model_is_stationary():
    rng = np.random.default_rng(3)
    y = np.cumsum(rng.normal(0, 1, 600)) * 0.01 + rng.normal(0, 1, 600)
    fitted = fit_sarima(y, (1, 0, 1), (1, 1, 1, 24))
    assert fitted.is_stationary()


def test_non_convergence_carries_best_iterate():
    rng = np.random.default_rng(4)
    y = rng.normal(0, 1, 300)
    with pytest.raises(SarimaFitError) as info:
        fit_sarima(y, (2, 0, 2), (1, 0, 1, 24), max_nfev=1)
    assert isinstance(info.value.best, SarimaSpec)


def test_spec_rejects_nonstationary_coefficients():
    with pytest.raises(ValueError):
        SarimaSpec((1, 0, 0), (0, 0, 0, 1), ar=(1.2,))


# ---------------------------------------------------------------------------
# Combined forecaster
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def two_models():
    rng = np.random.default_rng(5)
    t = np.arange(24 * 7 * 4)
    y = 2 + np.sin(2 * np.pi * t / 24) + 0.5 * (t % 168 < 120) + rng.normal(0, 0.1, t.size)
    daily = fit_sarima(y, (1, 0, 0), (1, 1, 0, 24))
    weekly = fit_sarima(y, (1, 0, 0), (1, 1, 0, 168))
    return daily, weekly, y


def test_alpha_endpoints_reproduce_constituents(two_models):
    daily, weekly, y = two_models
    np.testing.assert_array_equal(forecast_combined(daily, weekly, y, 0.0, 48).values,
                                  np.clip(daily.forecast(y, 48), 0, None))
    np.testing.assert_array_equal(forecast_combined(daily, weekly, y, 1.0, 48).values,
                                  np.clip(weekly.forecast(y, 48), 0, None))


def test_identical_models_are_a_fixed_point(two_models):
    daily, _, y = two_models
    mixed = forecast_combined(daily, daily, y, 0.5, 24).values
    np.testing.assert_allclose(mixed, np.clip(daily.forecast(y, 24), 0, None), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_combination_is_affine_in_alpha(two_models, a, b):
    daily, weekly, y = two_models
    fa = forecast_combined(daily, weekly, y, a, 24)
    fb = forecast_combined(daily, weekly, y, b, 24)
    yd, yw = fa.meta["daily"], fa.meta["weekly"] if a > 0 else fb.meta["weekly"]
    for alpha, fc in ((a, fa), (b, fb)):
        expected = np.clip(alpha * weekly.forecast(y, 24) + (1 - alpha) * daily.forecast(y, 24), 0, None)
        np.testing.assert_allclose(fc.values, expected, atol=1e-12)
    assert np.all(fa.values >= 0) and np.all(np.isfinite(fa.values))
    assert fa.provenance == (SARIMA_COMBINED,) * 24


@pytest.mark.parametrize("alpha", [-0.1, 1.5])
def test_alpha_outside_unit_interval_is_rejected(two_models, alpha):
    daily, weekly, y = two_models
    with pytest.raises(ForecastError):
        forecast_combined(daily, weekly, y, alpha, 24)


def test_forecast_csv_schema(tmp_path, two_models):
    daily, weekly, y = two_models
    fc = forecast_combined(daily, weekly, y, 0.5, 4, start=3600.0, step=300.0)
    path = tmp_path / "fc.csv"
    fc.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "timestamp,kg_per_s,provenance"
    assert lines[1].startswith("3600,") and lines[1].endswith(",sarima-combined")
