import json

import numpy as np
import pytest

from tsclean.frame import SeriesFrame
from tsclean.outliers import (DetectOptions, MixtureModel, OutlierDetector, attribute_causes,
                              detect_outliers)
from tsclean.outliers.detect import _fit_subset, satellite_components


S1 = 48


def spiked_sine(n=S1 * 20, noise=0.0, seed=0, k=3):
    rng = np.random.default_rng(seed)
    y = 100 * np.sin(2 * np.pi * np.arange(n) / S1) + noise * rng.normal(size=n)
    spikes = np.sort(rng.choice(np.arange(100, n - 100), k, replace=False))
    y[spikes] += 800 * rng.choice([-1, 1], k)
    return y, spikes


@pytest.fixture(scope="module")
def noisy_case():
    y, spikes = spiked_sine(noise=5.0, seed=4)
    return y, spikes, detect_outliers(y, S1=S1, seed=0, subsets=3)


def test_zero_noise_spikes_are_found():
    y, spikes = spiked_sine()
    report = detect_outliers(y, S1=S1, seed=0, subsets=2)
    flagged = set(report.flagged.tolist())
    assert set(spikes) <= flagged
    # the direct neighbours of a spike share its gradient anomaly
    allowed = {int(s) + d for s in spikes for d in (-1, 0, 1)}
    assert flagged <= allowed
    assert np.all(report.probabilities[spikes] > 0.99)


def test_noisy_spikes_are_found(noisy_case):
    y, spikes, report = noisy_case
    assert set(spikes) <= set(report.flagged.tolist())
    assert np.all(report.probabilities[spikes] > 0.9)


def test_null_series_rarely_flags():
    # i.i.d. noise; short series (n < 2000) sit closer to the 1% limit
    y = np.random.default_rng(11).normal(size=4800)
    report = detect_outliers(y, S1=S1, seed=1, subsets=2)
    assert len(report.flagged) <= 0.01 * len(y)


def test_probabilities_are_valid(noisy_case):
    _, _, report = noisy_case
    p = report.probabilities
    assert p.shape == (S1 * 20,)
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_array_equal(report.flagged, np.flatnonzero(p > report.threshold))
    assert np.all(report.subset_counts == 3)
    assert len(report.runs) == 3


def test_probabilities_average_the_subset_fits(noisy_case):
    y, _, report = noisy_case
    opts = DetectOptions(seed=0, subsets=3)
    Z = report.features.standardized
    children = np.random.SeedSequence(0).spawn(3)
    probs = [_fit_subset(Z, opts, c)[0].outlier_probability(Z) for c in children]
    np.testing.assert_allclose(report.probabilities, np.mean(probs, axis=0))


def test_same_seed_same_result(noisy_case):
    y, _, report = noisy_case
    again = detect_outliers(y, S1=S1, seed=0, subsets=3)
    np.testing.assert_array_equal(report.probabilities, again.probabilities)


def test_threads_do_not_change_the_result(noisy_case):
    y, _, report = noisy_case
    threaded = detect_outliers(y, S1=S1, seed=0, subsets=3, threads=3)
    np.testing.assert_array_equal(report.probabilities, threaded.probabilities)
    assert report.runs == threaded.runs


@pytest.mark.slow
def test_one_subset_and_ten_subsets_agree():
    y, spikes = spiked_sine(seed=7)
    one = detect_outliers(y, S1=S1, seed=3, subsets=1)
    ten = detect_outliers(y, S1=S1, seed=3, subsets=10)
    np.testing.assert_array_equal(one.flagged, ten.flagged)
    for report in (one, ten):
        assert report.probabilities[spikes].min() >= np.max(report.probabilities)


def test_affine_transform_keeps_the_flags(noisy_case):
    y, _, report = noisy_case
    moved = detect_outliers(3 * y + 17, S1=S1, seed=0, subsets=3)
    np.testing.assert_allclose(moved.probabilities, report.probabilities, atol=1e-6)


def test_frame_input_matches_array_input(noisy_case):
    y, _, report = noisy_case
    frame = SeriesFrame.from_array(y, (S1,))
    from_frame = detect_outliers(frame, 0, seed=0, subsets=3)
    np.testing.assert_array_equal(from_frame.probabilities, report.probabilities)


def test_report_is_json_serializable(noisy_case):
    _, spikes, report = noisy_case
    payload = json.loads(json.dumps(report.to_dict()))
    assert payload["flagged"] == report.flagged.tolist()
    assert set(payload["causes"]) == {str(t) for t in report.flagged}


def test_missing_values_are_rejected():
    y, _ = spiked_sine()
    y[10] = np.nan
    with pytest.raises(ValueError, match="impute"):
        detect_outliers(y, S1=S1)


def test_seasonality_is_required():
    with pytest.raises(ValueError, match="seasonality"):
        detect_outliers(np.arange(100.0))


def test_constant_series_flags_nothing():
    report = detect_outliers(np.full(200, 4.0), S1=24)
    assert report.flagged.size == 0
    assert np.all(report.probabilities == 0)


@pytest.mark.parametrize("bad", [{"alpha": 0}, {"c": 1}, {"threshold": 2}, {"G_max": 0},
                                 {"families": ("banana",)}])
def test_options_are_validated(bad):
    with pytest.raises(ValueError):
        DetectOptions(**bad)


def _cause_model():
    # regular data at the origin, a broad outlier component around it
    means = np.zeros((2, 3))
    covs = np.stack([np.eye(3), 400 * np.eye(3)])
    return MixtureModel(np.array([0.95, 0.05]), means, covs, "full", 0.0, 100, outlier_component=1)


NAMES = ["gradient", "abs_gradient", "rel_gradient"]


def test_cause_of_single_feature_anomaly():
    model = _cause_model()
    Z = np.array([[0.0, 12.0, 0.0]])
    assert model.outlier_probability(Z)[0] > 0.5
    assert attribute_causes(model, Z, [0], names=NAMES) == {0: ["abs_gradient"]}


def test_cause_of_pair_anomaly():
    model = _cause_model()
    Z = np.array([[6.0, 6.0, 0.0]])
    assert model.outlier_probability(Z)[0] > 0.5
    assert attribute_causes(model, Z, [0], names=NAMES) == {0: ["gradient+abs_gradient"]}


def test_cause_of_joint_anomaly():
    model = _cause_model()
    Z = np.array([[6.0, 6.0, 6.0]])
    assert attribute_causes(model, Z, [0], names=NAMES) == {0: ["joint"]}


def test_unflagged_rows_get_no_cause():
    model = _cause_model()
    Z = np.array([[0.0, 0.0, 0.0], [0.0, 12.0, 0.0]])
    assert attribute_causes(model, Z, [1], names=NAMES) == {1: ["abs_gradient"]}
    assert attribute_causes(model, Z, [], names=NAMES) == {}


def test_satellite_components_are_far_from_the_core():
    means = np.array([[0.0, 0.0], [0.0, 0.0], [40.0, 0.0], [1.0, 0.0]])
    covs = np.stack([np.eye(2), 100 * np.eye(2), 0.1 * np.eye(2), np.eye(2)])
    model = MixtureModel(np.array([0.8, 0.05, 0.05, 0.1]), means, covs, "full", 0.0, 100,
                         outlier_component=1)
    assert satellite_components(model, c=25.0) == (2,)


def test_detector_estimator(noisy_case):
    y, spikes, report = noisy_case
    det = OutlierDetector(seasonality=S1, subsets=3, random_state=0)
    labels = det.fit_predict(y)
    assert set(np.flatnonzero(labels == -1)) == set(report.flagged.tolist())
    np.testing.assert_array_equal(det.score_samples(), -report.probabilities)
