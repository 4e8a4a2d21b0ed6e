"""Apply modelled replacements and run the three-stage cleaning workflow.

1. model the missing cells and fill them with the median forecast;
2. detect outliers on the completed series;
3. hide the flagged cells together with the original gaps and model all of
   them in one pass, trained only on cells that were observed and not flagged.

Multivariate frames are cleaned column by column in input order; the other
columns are offered as external regressors.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .frame import SeriesFrame, _parse_index, format_index, format_tau, write_matrix
from .missing import Replacements, check_taus, model_missing_data
from .outliers import DetectOptions, detect_outliers

MISSING_ORIGINAL = "missing-original"
OUTLIER_DETECTED = "outlier-detected"
MISSING_REMODELLED = "missing-and-remodelled"

REPORT_NAME = "report.json"


def imputed_filename(tau: float) -> str:
    return f"imputed_q{format_tau(tau)}.csv"


@dataclass
class CleaningResult:
    """Imputed matrices per quantile level plus the audit trail.

    ``imputed[tau]`` is an ``n x m`` array. ``cell_provenance`` maps
    ``(row, column name)`` to the reason the cell was replaced; every other
    cell equals the input.
    """

    timestamps: pd.Index
    names: tuple[str, ...]
    imputed: dict
    cell_provenance: dict = field(default_factory=dict)
    outlier_reports: dict = field(default_factory=dict)
    options_echo: dict = field(default_factory=dict)
    aborted: dict = field(default_factory=dict)

    @property
    def taus(self) -> tuple[float, ...]:
        return tuple(sorted(self.imputed))

    def to_frame(self, tau: float) -> pd.DataFrame:
        return pd.DataFrame(self.imputed[tau], index=self.timestamps, columns=list(self.names))

    def __eq__(self, other) -> bool:
        if not isinstance(other, CleaningResult):
            return NotImplemented
        return (
            [format_index(t) for t in self.timestamps] == [format_index(t) for t in other.timestamps]
            and tuple(self.names) == tuple(other.names)
            and self.taus == other.taus
            and all(np.array_equal(self.imputed[t], other.imputed[t], equal_nan=True) for t in self.taus)
            and self.cell_provenance == other.cell_provenance
            and _jsonable(self.outlier_reports) == _jsonable(other.outlier_reports)
            and _jsonable(self.options_echo) == _jsonable(other.options_echo)
            and _jsonable(self.aborted) == _jsonable(other.aborted)
        )


def _jsonable(obj):
    return json.loads(json.dumps(obj, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.ndarray, tuple, set)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _sorted_quantiles(imputed: dict) -> dict:
    taus = sorted(imputed)
    stacked = np.sort(np.stack([imputed[t] for t in taus]), axis=0)
    return {t: stacked[i] for i, t in enumerate(taus)}


def impute_modelled_data(frame: SeriesFrame, replacements, taus=None) -> CleaningResult:
    """Write modelled values into copies of the frame, one matrix per level.

    Parameters
    ----------
    frame : SeriesFrame
    replacements : Replacements or dict
        A single :class:`Replacements` (for column 0) or a mapping from
        column name or index to one.
    taus : sequence of float, optional
        Levels to impute; every level modelled for all columns by default.

    Raises
    ------
    ValueError
        If a requested level was not modelled.
    """
    if isinstance(replacements, Replacements):
        replacements = {0: replacements}
    reps = {frame.column(c): r for c, r in replacements.items()}
    if taus is None:
        common = [set(r.taus) for r in reps.values()]
        taus = sorted(set.intersection(*common)) if common else [0.5]
    taus = check_taus(taus)
    for j, rep in reps.items():
        absent = [t for t in taus if t not in rep.values]
        if absent:
            raise ValueError(f"level(s) {absent} not modelled for {frame.names[j]!r}; "
                             f"available: {list(rep.taus)}")
    imputed = {}
    provenance = {}
    for tau in taus:
        mat = np.array(frame.values, dtype=float)
        for j, rep in reps.items():
            mat[rep.indices, j] = rep.values[tau]
        imputed[tau] = mat
    for j, rep in reps.items():
        for t in rep.indices:
            provenance[(int(t), frame.names[j])] = MISSING_ORIGINAL
    if imputed:
        imputed = _sorted_quantiles(imputed)
    return CleaningResult(frame.timestamps, tuple(frame.names), imputed, provenance,
                          options_echo={"taus": list(taus)})


def _column_seed(seed, m: int) -> list:
    if seed is None:
        return [None] * m
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(m)]


def auto_data_cleaning(frame: SeriesFrame, taus=(0.5,), seasonalities=None, detect_options=None,
                       model_options=None, abort_share: float = 0.5, seed=None) -> CleaningResult:
    """Impute, detect outliers, then remodel gaps and outliers together.

    Parameters
    ----------
    frame : SeriesFrame
    taus : sequence of float
        Levels of the final imputation.
    seasonalities : sequence of int, optional
        Defaults to the frame's.
    detect_options : DetectOptions or dict, optional
    model_options : dict, optional
        Passed to :func:`model_missing_data` (``recursive``, ``rho_min``, ...).
    abort_share : float
        A column with more than this share of flagged cells is left
        unmodified and reported in ``aborted``.
    seed : int, optional
        Master seed; each column's detection draws a child seed from it.
    """
    taus = check_taus(taus)
    S = tuple(seasonalities if seasonalities is not None else frame.seasonalities)
    if not S:
        raise ValueError("cleaning needs at least one seasonality")
    if isinstance(detect_options, dict):
        detect_options = DetectOptions(**detect_options)
    detect_options = detect_options or DetectOptions()
    model_options = dict(model_options or {})
    col_seeds = _column_seed(seed if seed is not None else detect_options.seed, frame.m)

    n, m = frame.n, frame.m
    imputed = {tau: np.array(frame.values, dtype=float) for tau in taus}
    stage1 = np.array(frame.values, dtype=float)
    provenance, reports, aborted = {}, {}, {}

    for j, name in enumerate(frame.names):
        others = [k for k in range(m) if k != j]
        X = stage1[:, others] if others else None
        missing = np.asarray(frame.missing_mask[:, j], dtype=bool)

        y1 = frame.series(j)
        if missing.any():
            _, rep = model_missing_data(frame, j, taus=(0.5,), externals=X, seasonalities=S,
                                        **model_options)
            y1[rep.indices] = rep.point()
        stage1[:, j] = y1

        opts = DetectOptions(**{**asdict(detect_options), "seed": col_seeds[j]})
        report = detect_outliers(SeriesFrame.from_array(y1, S), 0, options=opts)
        reports[name] = report.to_dict()
        flagged = np.zeros(n, dtype=bool)
        flagged[report.flagged] = True

        if flagged.sum() > abort_share * n:
            aborted[name] = {
                "reason": "too many outliers",
                "flagged": int(flagged.sum()),
                "share": float(flagged.mean()),
                "limit": abort_share,
            }
            continue

        hide = missing | flagged
        if not hide.any():
            continue
        _, rep = model_missing_data(frame, j, taus=taus, externals=X, seasonalities=S,
                                    fit_mask=flagged, **model_options)
        for tau in taus:
            imputed[tau][rep.indices, j] = rep.values[tau]
        for t in np.flatnonzero(hide):
            if missing[t]:
                cls = MISSING_REMODELLED if flagged[t] else MISSING_ORIGINAL
            else:
                cls = OUTLIER_DETECTED
            provenance[(int(t), name)] = cls

    echo = {
        "taus": list(taus),
        "seasonalities": list(S),
        "detect": {k: v for k, v in asdict(detect_options).items() if k != "threads"},
        "model": model_options,
        "abort_share": abort_share,
        "seed": seed,
    }
    return CleaningResult(frame.timestamps, tuple(frame.names), _sorted_quantiles(imputed),
                          provenance, reports, echo, aborted)


def write_report(result: CleaningResult, path) -> list[Path]:
    """Write one CSV per level and a JSON report into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    index_name = result.timestamps.name or "timestamp"
    for tau in result.taus:
        written.append(write_matrix(out / imputed_filename(tau), result.timestamps, result.names,
                                    result.imputed[tau], index_name))
    report = {
        "names": list(result.names),
        "taus": list(result.taus),
        "provenance": [{"row": r, "column": c, "class": k}
                       for (r, c), k in sorted(result.cell_provenance.items())],
        "outliers": result.outlier_reports,
        "aborted": result.aborted,
        "options": result.options_echo,
    }
    target = out / REPORT_NAME
    target.write_text(json.dumps(report, sort_keys=True, indent=1, default=_json_default) + "\n")
    written.append(target)
    return written


def read_report(path) -> CleaningResult:
    """Inverse of :func:`write_report`."""
    out = Path(path)
    report = json.loads((out / REPORT_NAME).read_text())
    names = tuple(report["names"])
    imputed = {}
    timestamps = pd.Index([])
    for tau in report["taus"]:
        table = pd.read_csv(out / imputed_filename(tau), dtype=str, keep_default_na=False)
        timestamps = _parse_index(table.iloc[:, 0]).rename(table.columns[0]) if len(table) else pd.Index([])
        body = table[list(names)].replace("", "nan").astype(float)
        imputed[float(tau)] = body.to_numpy().reshape(len(table), len(names))
    provenance = {(int(p["row"]), p["column"]): p["class"] for p in report["provenance"]}
    return CleaningResult(timestamps, names, imputed, provenance, report["outliers"],
                          report["options"], report["aborted"])


class AutoCleaner(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`auto_data_cleaning`.

    Cleaning is transductive: ``transform`` returns the matrix at level
    ``quantile`` for the data seen by ``fit``; the full result is kept in
    ``result_``.
    """

    def __init__(self, seasonalities=(48,), taus=(0.5,), quantile=0.5, abort_share=0.5,
                 random_state=None):
        self.seasonalities = seasonalities
        self.taus = taus
        self.quantile = quantile
        self.abort_share = abort_share
        self.random_state = random_state

    def fit(self, X, y=None):
        values = np.asarray(X, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        frame = SeriesFrame.from_array(values, self.seasonalities)
        taus = sorted(set(self.taus) | {self.quantile})
        self.result_ = auto_data_cleaning(frame, taus=taus, abort_share=self.abort_share,
                                          seed=self.random_state)
        self.n_features_in_ = values.shape[1]
        return self

    def transform(self, X):
        """Cleaned version of the data passed to ``fit``."""
        check_is_fitted(self, "result_")
        shape = np.shape(X)
        if shape[0] != len(self.result_.timestamps):
            raise ValueError("transform expects the data that was passed to fit")
        return self.result_.imputed[float(self.quantile)]

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
