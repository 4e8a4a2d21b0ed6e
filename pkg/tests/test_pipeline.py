import json

import numpy as np
import pandas as pd
import pytest

from tsclean.frame import SeriesFrame
from tsclean.missing import model_missing_data
from tsclean.pipeline import (MISSING_ORIGINAL, MISSING_REMODELLED, OUTLIER_DETECTED, REPORT_NAME,
                              AutoCleaner, CleaningResult, auto_data_cleaning, impute_modelled_data,
                              read_report, write_report)
from tsclean.synthetic import make_load_series

from conftest import seasonal_series

S = (48,)
FAST = {"subsets": 2}
N = 48 * 14


def clean_fixture():
    """Noiseless daily profile: nothing to impute or flag."""
    t = np.arange(N)
    return 100 + 20 * np.sin(2 * np.pi * t / 48) + 5 * np.cos(4 * np.pi * t / 48)


def frame_of(y, **kw):
    return SeriesFrame.from_array(y, S, names=("load",), **kw)


@pytest.fixture(scope="module")
def gappy_frame():
    y, _ = make_load_series(n=N, seasonalities=S, seed=2)
    y[[100, 250, 251, 252, 400]] = np.nan
    return frame_of(y)


def test_single_missing_cell_changes_one_cell(gappy_frame):
    y = gappy_frame.series(0)
    y[np.isnan(y)] = 0.0
    y[200] = np.nan
    frame = frame_of(y)
    _, rep = model_missing_data(frame, 0, taus=(0.5,))
    result = impute_modelled_data(frame, rep, taus=(0.5,))
    out = result.imputed[0.5][:, 0]
    differs = ~np.isclose(out, frame.values[:, 0], equal_nan=False)
    assert np.flatnonzero(differs).tolist() == [200]
    assert result.cell_provenance == {(200, "load"): MISSING_ORIGINAL}


def test_three_levels_are_cellwise_sorted(gappy_frame):
    taus = (0.25, 0.5, 0.75)
    _, rep = model_missing_data(gappy_frame, 0, taus=taus)
    result = impute_modelled_data(gappy_frame, {"load": rep})
    assert result.taus == taus
    stack = np.stack([result.imputed[t] for t in taus])
    assert np.all(np.diff(stack, axis=0) >= 0)
    observed = ~gappy_frame.missing_mask
    for t in taus:
        np.testing.assert_array_equal(result.imputed[t][observed], gappy_frame.values[observed])


def test_no_missing_cells_is_identity():
    frame = frame_of(clean_fixture())
    _, rep = model_missing_data(frame, 0, taus=(0.1, 0.9))
    result = impute_modelled_data(frame, rep)
    for tau in (0.1, 0.9):
        np.testing.assert_array_equal(result.imputed[tau], frame.values)
    assert result.cell_provenance == {}


def test_unmodelled_level_is_an_error(gappy_frame):
    _, rep = model_missing_data(gappy_frame, 0, taus=(0.5,))
    with pytest.raises(ValueError, match=r"available: \[0\.5\]"):
        impute_modelled_data(gappy_frame, rep, taus=(0.9,))


def test_clean_series_is_a_fixed_point():
    frame = frame_of(clean_fixture())
    taus = (0.05, 0.5, 0.95)
    result = auto_data_cleaning(frame, taus=taus, detect_options=FAST, seed=1)
    for tau in taus:
        np.testing.assert_array_equal(result.imputed[tau], frame.values)
    assert result.cell_provenance == {}
    assert result.aborted == {}


def test_missing_only_matches_direct_modelling():
    y = clean_fixture()
    y[[100, 101, 102, 300, 555]] = np.nan
    frame = frame_of(y)
    taus = (0.25, 0.5, 0.75)
    result = auto_data_cleaning(frame, taus=taus, detect_options=FAST, seed=1)
    assert result.outlier_reports["load"]["flagged"] == []
    _, rep = model_missing_data(frame, 0, taus=taus)
    direct = impute_modelled_data(frame, rep)
    for tau in taus:
        np.testing.assert_array_equal(result.imputed[tau], direct.imputed[tau])
    assert result.cell_provenance == direct.cell_provenance


def test_spikes_only_are_replaced():
    truth = clean_fixture()
    y = truth.copy()
    spikes = [150, 333, 500]
    y[spikes] += [300.0, -250.0, 400.0]
    result = auto_data_cleaning(frame_of(y), taus=(0.5,), detect_options=FAST, seed=3)
    out = result.imputed[0.5][:, 0]
    replaced = {t for t, _ in result.cell_provenance}
    assert set(spikes) <= replaced
    # direct neighbours of a spike may be flagged too
    assert replaced <= {s + d for s in spikes for d in (-1, 0, 1)}
    assert set(result.cell_provenance.values()) == {OUTLIER_DETECTED}
    np.testing.assert_allclose(out[spikes], truth[spikes], atol=2.0)


def test_missing_and_flagged_cell_is_remodelled():
    y = clean_fixture()
    y[200:203] = np.nan
    y[204] += 300
    frame = frame_of(y)
    result = auto_data_cleaning(frame, taus=(0.5,), detect_options=FAST, seed=3)
    classes = result.cell_provenance
    assert classes[(204, "load")] == OUTLIER_DETECTED
    for t in range(200, 203):
        assert classes[(t, "load")] in (MISSING_ORIGINAL, MISSING_REMODELLED)


def test_provenance_covers_every_changed_cell():
    y, _ = make_load_series(n=N, seasonalities=S, seed=9)
    y[[50, 400]] += 600
    y[300:310] = np.nan
    frame = frame_of(y)
    result = auto_data_cleaning(frame, taus=(0.1, 0.5, 0.9), detect_options=FAST, seed=2)
    for tau in result.taus:
        changed = ~np.isclose(result.imputed[tau], frame.values) | np.isnan(frame.values)
        rows, cols = np.nonzero(changed)
        for r, c in zip(rows, cols):
            assert (int(r), frame.names[c]) in result.cell_provenance
    for t in range(300, 310):
        assert (t, "load") in result.cell_provenance


def test_levels_are_monotone_after_cleaning():
    y, _ = make_load_series(n=N, seasonalities=S, seed=4)
    y[120:140] = np.nan
    taus = (0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975)
    result = auto_data_cleaning(frame_of(y), taus=taus, detect_options=FAST, seed=2)
    stack = np.stack([result.imputed[t] for t in taus])
    assert np.all(np.diff(stack, axis=0) >= 0)


def test_heavily_flagged_column_is_aborted():
    y = clean_fixture()
    y[100] += 500
    frame = frame_of(y)
    result = auto_data_cleaning(frame, detect_options=FAST, abort_share=0.001, seed=1)
    assert "load" in result.aborted
    assert result.aborted["load"]["reason"] == "too many outliers"
    np.testing.assert_array_equal(result.imputed[0.5], frame.values)


def test_multivariate_columns_are_cleaned_in_order():
    a = clean_fixture()
    b = 0.5 * clean_fixture() + 3
    a[60:64] = np.nan
    b[200:205] = np.nan
    frame = SeriesFrame.from_array(np.column_stack([a, b]), S, names=("a", "b"))
    result = auto_data_cleaning(frame, detect_options=FAST, seed=5)
    assert not np.isnan(result.imputed[0.5]).any()
    assert {c for _, c in result.cell_provenance} == {"a", "b"}
    assert list(result.outlier_reports) == ["a", "b"]


def test_cleaning_is_deterministic():
    y, _ = make_load_series(n=N, seasonalities=S, seed=6)
    y[[77, 300]] += 500
    frame = frame_of(y)
    one = auto_data_cleaning(frame, detect_options=FAST, seed=8)
    two = auto_data_cleaning(frame, detect_options={**FAST, "threads": 2}, seed=8)
    assert one == two


def test_options_are_echoed():
    result = auto_data_cleaning(frame_of(clean_fixture()), taus=(0.5, 0.9), detect_options=FAST,
                                model_options={"recursive": False}, seed=4)
    echo = result.options_echo
    assert echo["taus"] == [0.5, 0.9]
    assert echo["seasonalities"] == [48]
    assert echo["detect"]["subsets"] == 2 and "threads" not in echo["detect"]
    assert echo["model"] == {"recursive": False}
    assert echo["seed"] == 4


def test_two_levels_give_two_files(tmp_path, gappy_frame):
    _, rep = model_missing_data(gappy_frame, 0, taus=(0.1, 0.9))
    result = impute_modelled_data(gappy_frame, rep)
    written = write_report(result, tmp_path)
    csvs = sorted(p.name for p in tmp_path.glob("*.csv"))
    assert csvs == ["imputed_q0.1.csv", "imputed_q0.9.csv"]
    assert (tmp_path / REPORT_NAME) in written


def test_report_round_trips(tmp_path):
    y, _ = make_load_series(n=N, seasonalities=S, seed=7)
    y[[90, 91]] = np.nan
    y[333] += 700
    result = auto_data_cleaning(frame_of(y), taus=(0.25, 0.75), detect_options=FAST, seed=1)
    write_report(result, tmp_path)
    assert read_report(tmp_path) == result


def test_report_bytes_are_deterministic(tmp_path):
    y = clean_fixture()
    y[10] = np.nan
    result = auto_data_cleaning(frame_of(y), detect_options=FAST, seed=1)
    write_report(result, tmp_path / "a")
    write_report(result, tmp_path / "b")
    for name in ("imputed_q0.5.csv", REPORT_NAME):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_empty_result_writes_header_only(tmp_path):
    empty = CleaningResult(pd.Index([], name="timestamp"), ("x",), {0.5: np.zeros((0, 1))})
    write_report(empty, tmp_path)
    assert (tmp_path / "imputed_q0.5.csv").read_text().strip() == "timestamp,x"
    report = json.loads((tmp_path / REPORT_NAME).read_text())
    assert report["provenance"] == [] and report["outliers"] == {}
    assert read_report(tmp_path) == empty


def test_auto_cleaner_estimator():
    y = seasonal_series(N, 48, level=50)
    y[40] = np.nan
    cleaner = AutoCleaner(seasonalities=S, taus=(0.5,), random_state=0)
    out = cleaner.fit_transform(y)
    assert out.shape == (N, 1)
    assert not np.isnan(out).any()
    assert out[40, 0] == pytest.approx(y[88], abs=0.5)
