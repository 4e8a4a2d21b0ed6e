import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsclean.decompose import (RobustDecomposer, default_trend_window, expand_phase_table,
                               external_component, robust_decompose, robust_trend,
                               seasonal_phase_medians)
from tsclean.synthetic import make_load_series

from conftest import seasonal_series


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


@pytest.mark.parametrize("y, expected", [
    ([1, 1, 1, 1, 1], [1, 1, 1, 1, 1]),
    ([1, 100, 1, 1, 1], [1, 1, 1, 1, 1]),
    # reflection at the ends keeps a linear trend exact
    ([1, 2, 3, 4, 5], [1, 2, 3, 4, 5]),
])
def test_robust_trend_hand_cases(y, expected):
    np.testing.assert_allclose(robust_trend(np.array(y, dtype=float), 3), expected)


def test_robust_trend_fills_empty_windows_by_interpolation():
    y = np.array([0.0, 0.0, np.nan, np.nan, np.nan, np.nan, np.nan, 6.0, 6.0])
    trend = robust_trend(y, 3)
    assert not np.isnan(trend).any()
    assert np.all(np.diff(trend) >= 0)


@pytest.mark.parametrize("window", [2, 1, 4])
def test_robust_trend_rejects_bad_window(window):
    with pytest.raises(ValueError):
        robust_trend(np.arange(10.0), window)


def test_robust_trend_all_missing():
    with pytest.raises(ValueError):
        robust_trend(np.full(5, np.nan), 3)


def test_default_trend_window():
    assert default_trend_window((48, 336)) == 337
    assert default_trend_window((24,)) == 25
    assert default_trend_window((7,)) == 7


@pytest.mark.parametrize("detrended, period, expected", [
    ([1, -1, 1, -1], 2, [1, -1]),
    ([5, 5, 5, 5, 5, 5], 3, [0, 0, 0]),
    ([3, 0, 5, 0, 4, 0], 2, [2, -2]),
])
def test_phase_medians_hand_cases(detrended, period, expected):
    np.testing.assert_allclose(seasonal_phase_medians(np.array(detrended, dtype=float), period), expected)


def test_expand_phase_table_is_periodic():
    table = np.array([1.0, 2.0, -3.0])
    out = expand_phase_table(table, 10)
    assert out.tolist() == [1, 2, -3, 1, 2, -3, 1, 2, -3, 1]


def test_external_component_perfect_regressor(rng):
    r = rng.normal(size=200)
    comp, coef, _ = external_component(r, r[:, None], lambda_rule=("fixed", 1e-6))
    np.testing.assert_allclose(coef, [1.0], atol=1e-3)
    np.testing.assert_allclose(comp, r - r.mean(), atol=1e-2)


def test_external_component_noise_under_large_penalty(rng):
    r = rng.normal(size=200)
    X = rng.normal(size=(200, 3))
    comp, coef, _ = external_component(r, X, lambda_rule=("fixed", 1e6))
    assert np.all(coef == 0)
    assert np.all(comp == 0)


def test_external_component_recovers_sparse_coefficient(rng):
    X = rng.normal(size=(50, 3))
    r = 2 * X[:, 0] + rng.normal(scale=0.05, size=50)
    _, coef, _ = external_component(r, X)
    assert coef[0] == pytest.approx(2.0, abs=0.05)
    assert np.all(np.abs(coef[1:]) < 0.05)


def test_pure_sine_is_captured_by_the_seasonal_component():
    amp = 10.0
    y = seasonal_series(48 * 20, 48, amplitude=amp)
    dec = robust_decompose(y, seasonalities=(48,))
    assert rms(dec.seasonal[0] - y) < 0.05 * amp
    assert rms(dec.remainder) < 0.05 * amp


def test_constant_series():
    dec = robust_decompose(np.full(200, 3.5), seasonalities=(10,))
    np.testing.assert_allclose(dec.trend, 3.5)
    np.testing.assert_allclose(dec.seasonal, 0.0)
    np.testing.assert_allclose(dec.remainder, 0.0)


def test_thirty_percent_missing_reconstruction_and_accuracy(rng):
    n = 48 * 7 * 6
    y, parts = make_load_series(n=n, seasonalities=(48,), seed=2, noise_sd=5, weekly_amplitude=0)
    y = y.copy()
    hide = rng.random(n) < 0.3
    y[hide] = np.nan
    dec = robust_decompose(y, seasonalities=(48,))
    obs = ~hide
    recon = dec.trend + dec.seasonal.sum(axis=0) + dec.external + dec.remainder
    np.testing.assert_allclose(recon[obs], y[obs], rtol=1e-9)
    assert np.isnan(dec.remainder[hide]).all()
    assert not np.isnan(dec.trend).any()
    truth = parts["seasonal"][0]
    assert rms(dec.seasonal[0] - (truth - truth.mean())) < 0.1 * rms(truth)


@given(st.integers(0, 10_000), st.sampled_from([(12,), (12, 36)]), st.floats(0.0, 0.4))
def test_reconstruction_and_periodicity(seed, S, share):
    rng = np.random.default_rng(seed)
    n = 36 * 6
    y = rng.normal(size=n).cumsum() + 5 * np.sin(2 * np.pi * np.arange(n) / 12)
    y[rng.random(n) < share] = np.nan
    if np.isnan(y).all():
        return
    dec = robust_decompose(y, seasonalities=S)
    obs = ~np.isnan(y)
    recon = dec.trend + dec.seasonal.sum(axis=0) + dec.external + dec.remainder
    scale = np.max(np.abs(y[obs]))
    assert np.max(np.abs(recon[obs] - y[obs])) <= 1e-9 * scale
    for k, period in enumerate(S):
        s = dec.seasonal[k]
        assert np.array_equal(s[period:], s[:-period])


def test_spikes_barely_move_trend_and_seasonal(rng):
    n = 48 * 7 * 8
    t = np.arange(n)
    amp = 100.0
    y = 500 + 0.01 * t + seasonal_series(n, 48, amp) + seasonal_series(n, 336, 40) + rng.normal(size=n)
    clean = robust_decompose(y, seasonalities=(48, 336))
    dirty = y.copy()
    idx = rng.choice(n, int(0.05 * n), replace=False)
    dirty[idx] += 10 * rng.choice([-1, 1], len(idx))
    spiked = robust_decompose(dirty, seasonalities=(48, 336))
    assert rms(spiked.trend - clean.trend) < 0.01 * amp
    for k in range(2):
        assert rms(spiked.seasonal_tables[k] - clean.seasonal_tables[k]) < 0.01 * amp


def test_masking_fitted_points_leaves_tables_nearly_unchanged(rng):
    y, _ = make_load_series(n=48 * 7 * 6, seasonalities=(48,), seed=8, weekly_amplitude=0)
    dec = robust_decompose(y, seasonalities=(48,))
    y2 = y.copy()
    y2[rng.choice(len(y), 200, replace=False)] = np.nan
    dec2 = robust_decompose(y2, seasonalities=(48,))
    assert rms(dec2.seasonal_tables[0] - dec.seasonal_tables[0]) < 0.05 * rms(dec.seasonal_tables[0])


def test_too_short_for_seasonality():
    with pytest.raises(ValueError):
        robust_decompose(np.arange(50.0), seasonalities=(48,))


def test_frame_input_and_component_names(load_frame):
    dec = robust_decompose(load_frame)
    assert dec.component_names == ["trend", "seasonal_48", "seasonal_336", "external"]
    assert dec.components_matrix.shape == (load_frame.n, 4)


def test_decomposer_estimator(load_series):
    y, _ = load_series
    est = RobustDecomposer(seasonalities=(48, 336))
    comps = est.fit_transform(y)
    assert comps.shape == (len(y), 5)
    np.testing.assert_allclose(comps.sum(axis=1), y, rtol=1e-12)
    assert est.get_params()["seasonalities"] == (48, 336)
    assert list(est.get_feature_names_out()) == ["trend", "seasonal_48", "seasonal_336", "external",
                                                 "remainder"]
