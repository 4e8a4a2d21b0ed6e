import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsclean.bench import (StudyConfig, generate_mar_mask, linear_interp, lognormal_params, locf,
                           run_study, seasonal_median, summarize)
from tsclean.frame import SeriesFrame
from tsclean.synthetic import make_load_series

NA = np.nan


def test_locf_example():
    np.testing.assert_array_equal(locf([1, NA, NA, 4]), [1, 1, 1, 4])


def test_locf_leading_gap_takes_next_observation():
    np.testing.assert_array_equal(locf([NA, NA, 3, NA]), [3, 3, 3, 3])


def test_linear_example():
    np.testing.assert_array_equal(linear_interp([1, NA, NA, 4]), [1, 2, 3, 4])


def test_linear_is_constant_at_the_ends():
    np.testing.assert_array_equal(linear_interp([NA, 2, NA, 6, NA]), [2, 2, 4, 6, 6])


def test_seasonal_median_example():
    out = seasonal_median([1, 10, NA, 12, 3, NA], period=2)
    assert out[2] == 2 and out[5] == 11


def test_baselines_accept_a_mask():
    y = np.array([1.0, 5.0, 5.0, 4.0])
    mask = np.array([False, True, True, False])
    np.testing.assert_array_equal(locf(y, mask), [1, 1, 1, 4])
    np.testing.assert_array_equal(linear_interp(y, mask), [1, 2, 3, 4])
    np.testing.assert_array_equal(y, [1, 5, 5, 4])


def test_lognormal_moment_matching():
    mu, sigma = lognormal_params(12.0, 6.0)
    assert math.exp(mu + sigma**2 / 2) == pytest.approx(12.0)
    var = (math.exp(sigma**2) - 1) * math.exp(2 * mu + sigma**2)
    assert math.sqrt(var) == pytest.approx(6.0)


def test_small_share_gives_one_block():
    for seed in range(20):
        mask = generate_mar_mask(1000, 0.005, block_mean=50, block_sd=5, seed=seed)
        starts = np.flatnonzero(np.diff(mask.astype(int)) == 1)
        assert len(starts) + mask[0] == 1


def test_masked_share_reaches_target_by_at_most_one_block():
    n, share = 17520, 0.1
    mask = generate_mar_mask(n, share, seed=3)
    masked = mask.sum()
    assert masked >= share * n
    # the last block overshoots by less than its own length; lengths beyond 100 are vanishingly rare
    assert masked < share * n + 100


def test_mean_block_length_is_moment_matched():
    rng = np.random.default_rng(0)
    mu, sigma = lognormal_params(12.0, 6.0)
    lengths = np.maximum(1, np.round(rng.lognormal(mu, sigma, 1000)))
    assert lengths.mean() == pytest.approx(12.0, rel=0.1)
    # blocks as placed: isolated single-block masks
    observed = []
    for seed in range(1000):
        mask = generate_mar_mask(2000, 0.0005, seed=seed)
        observed.append(mask.sum())
    assert np.mean(observed) == pytest.approx(12.0, rel=0.1)


@given(seed=st.integers(0, 10_000), share=st.floats(0.01, 0.5))
def test_mask_respects_the_guard(seed, share):
    n, guard = 2000, 96
    mask = generate_mar_mask(n, share, seed=seed, guard=guard)
    assert not mask[:guard].any() and not mask[-guard:].any()
    assert mask.sum() >= share * n


def test_unreachable_share_is_an_error():
    with pytest.raises(ValueError, match="nothing to mask"):
        generate_mar_mask(50, 0.01)
    with pytest.raises(ValueError, match="0.9"):
        generate_mar_mask(100, 0.95)


def test_mask_is_seeded():
    a = generate_mar_mask(500, 0.2, seed=9)
    b = generate_mar_mask(500, 0.2, seed=9)
    np.testing.assert_array_equal(a, b)


@pytest.fixture(scope="module")
def small_frame():
    y, _ = make_load_series(n=48 * 7 * 6, seed=3)
    return SeriesFrame.from_array(y, (48, 336), names=("load",))


def test_oracle_has_zero_error(small_frame):
    cfg = StudyConfig(shares=(0.01, 0.2), repetitions=3, methods=("oracle",))
    table = run_study(small_frame, cfg)
    assert len(table) == 6
    assert (table["mae"] == 0).all()


def test_locf_ramp_closed_form():
    slope, L = 2.5, 7
    y = slope * np.arange(40.0)
    mask = np.zeros(40, dtype=bool)
    mask[10:10 + L] = True
    est = locf(y, mask)
    mae = np.mean(np.abs(est[mask] - y[mask]))
    assert mae == pytest.approx(slope * np.mean(np.arange(1, L + 1)))


def test_table_shape_and_reproducibility(small_frame):
    cfg = StudyConfig(shares=(0.05, 0.1), repetitions=2, seed=4,
                      methods=("linear", "locf", "seasonal_median", "model"))
    one = run_study(small_frame, cfg)
    two = run_study(small_frame, StudyConfig(**{**cfg.__dict__, "threads": 2}))
    cols = ["method", "share", "repetition", "mae", "error"]
    assert one[cols].equals(two[cols])
    summary = summarize(one)
    assert list(summary.columns) == ["0.05", "0.1"]
    assert set(summary.index) == set(cfg.methods)
    assert (one["error"] == "").all()
    assert summary.loc["model"].lt(summary.loc["locf"]).all()


def test_failing_method_is_a_missing_cell(small_frame, monkeypatch):
    import tsclean.bench as bench

    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setitem(bench.METHODS, "linear", broken)
    table = run_study(small_frame, StudyConfig(shares=(0.05,), repetitions=1, methods=("linear",)))
    assert np.isnan(table["mae"].iloc[0])
    assert "boom" in table["error"].iloc[0]


def test_study_requires_complete_series(small_frame):
    y = small_frame.series(0)
    y[5] = np.nan
    with pytest.raises(ValueError, match="fully observed"):
        run_study(y, StudyConfig(repetitions=1), seasonalities=(48,))


@pytest.mark.parametrize("bad", [{"shares": (0.2, 0.1)}, {"shares": (0.0,)}, {"shares": (1.0,)},
                                 {"repetitions": 0}, {"block_sd": 0}, {"methods": ("magic",)}])
def test_config_is_validated(bad):
    with pytest.raises(ValueError):
        StudyConfig(**bad)
