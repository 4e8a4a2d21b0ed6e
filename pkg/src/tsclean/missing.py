"""Model-based replacement of missing values.

The target series is decomposed robustly; on the remainder a linear model
with autoregressive lags and leads, the decomposition components and selected
external regressors is fitted once for the mean (weighted lasso, BIC) and
once per requested quantile level (pinball loss). Missing cells are then
predicted in temporal order, optionally feeding each median prediction back
so later rows can use it as a lagged regressor.
"""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .decompose import Decomposition, robust_decompose
from .frame import SeriesFrame, check_seasonalities
from .solvers import DesignMatrix, fit_quantile, fit_weighted_lasso, select_lambda

logger = logging.getLogger(__name__)


def check_taus(taus) -> tuple[float, ...]:
    taus = tuple(sorted(float(t) for t in taus))
    for t in taus:
        if not 0.0 < t < 1.0:
            raise ValueError(f"quantile levels must lie strictly inside (0, 1), got {t}")
    if len(set(taus)) != len(taus):
        raise ValueError(f"duplicate quantile levels in {taus}")
    return taus


@dataclass(frozen=True)
class LagSet:
    """Sorted non-zero lags; negative values are leads (future values)."""

    lags: tuple[int, ...]
    origin: object = "user"

    def __post_init__(self):
        lags = tuple(sorted(int(v) for v in set(self.lags)))
        if 0 in lags:
            raise ValueError("lag 0 is not allowed in an autoregressive lag set")
        object.__setattr__(self, "lags", lags)

    def __iter__(self):
        return iter(self.lags)

    def __len__(self):
        return len(self.lags)

    def without(self, lags) -> "LagSet":
        drop = set(lags)
        return LagSet(tuple(v for v in self.lags if v not in drop), self.origin)


def default_order(seasonalities, n: int) -> int:
    """AR order: 1 for short series (n < 20 max(S)), 2 otherwise."""
    return 1 if n < 20 * max(seasonalities) else 2


def default_lag_set(seasonalities, n: int, p: int | None = None, leads: bool = True) -> LagSet:
    """Lags of a multi-seasonal AR(p+1, p, ..., p) without cross-seasonal terms.

    The set holds ``1..p+1`` and, for every seasonality ``s``, ``s..s+p``.
    Lags equal to a sum of two or more distinct seasonalities are removed.
    With ``leads`` every lag is mirrored by its negative.
    """
    S = check_seasonalities(seasonalities)
    if not S:
        raise ValueError("at least one seasonality is required")
    if p is None:
        p = default_order(S, n)
    if p < 0:
        raise ValueError(f"AR order must be non-negative, got {p}")
    lags = set(range(1, p + 2))
    for s in S:
        lags.update(range(s, s + p + 1))
    combos = {sum(c) for r in range(2, len(S) + 1) for c in itertools.combinations(S, r)}
    lags = {v for v in lags - combos if v < n}
    if leads:
        lags |= {-v for v in lags}
    return LagSet(tuple(lags), origin=(S, p))


def shift(x: np.ndarray, lag: int) -> np.ndarray:
    """``out[t] = x[t - lag]``, NaN where the source index falls outside."""
    x = np.asarray(x, dtype=float)
    out = np.full(len(x), np.nan)
    if lag == 0:
        return x.copy()
    if abs(lag) >= len(x):
        return out
    if lag > 0:
        out[lag:] = x[:-lag]
    else:
        out[:lag] = x[-lag:]
    return out


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < 3:
        return 0.0
    a, b = a[ok], b[ok]
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def select_externals(y, X, rho_min: float = 0.6, ext_lags=(0,)):
    """Keep (column, lag) pairs whose |Pearson correlation| with ``y`` reaches ``rho_min``.

    Correlations use jointly observed rows only. Constant columns get
    correlation 0 and a warning entry.

    Returns
    -------
    selected : list of (int, int)
    report : dict
        ``{"correlations": {(j, lag): rho}, "warnings": [...]}``
    """
    if not 0.0 <= rho_min <= 1.0:
        raise ValueError(f"rho_min must lie in [0, 1], got {rho_min}")
    y = np.asarray(y, dtype=float)
    if X is None:
        return [], {"correlations": {}, "warnings": []}
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    lags = sorted(set(int(v) for v in ext_lags) | {0})
    selected, corr, warn = [], {}, []
    for j in range(X.shape[1]):
        col = X[:, j]
        finite = col[np.isfinite(col)]
        if finite.size == 0 or np.all(finite == finite[0]):
            warn.append(f"external column {j} is constant; correlation set to 0")
            for lag in lags:
                corr[(j, lag)] = 0.0
            continue
        for lag in lags:
            rho = _pearson(y, shift(col, lag))
            corr[(j, lag)] = rho
            if abs(rho) >= rho_min and (rho_min > 0 or rho != 0.0):
                selected.append((j, lag))
    return selected, {"correlations": corr, "warnings": warn}


def _component_columns(components):
    if isinstance(components, Decomposition):
        return components.components_matrix, components.component_names
    if components is None:
        return None, []
    mat = np.asarray(components, dtype=float)
    mat = mat.reshape(mat.shape[0], -1)
    return mat, [f"component_{i}" for i in range(mat.shape[1])]


def regressor_matrix(remainder, lag_set, components=None, X=None, selected=()):
    """Full-grid regressor matrix with NaN wherever a regressor is unavailable.

    Column order: one per lag, then decomposition components, then the
    selected external (column, lag) pairs.
    """
    r = np.asarray(remainder, dtype=float)
    cols, names = [], []
    for lag in lag_set:
        cols.append(shift(r, lag))
        names.append(f"lag_{lag}")
    comp, comp_names = _component_columns(components)
    if comp is not None:
        cols.extend(comp.T)
        names.extend(comp_names)
    if selected:
        X = np.asarray(X, dtype=float).reshape(len(r), -1)
        for j, lag in selected:
            cols.append(shift(X[:, j], lag))
            names.append(f"ext_{j}_lag_{lag}")
    mat = np.column_stack(cols) if cols else np.zeros((len(r), 0))
    return mat, names


def build_design(remainder, lag_set, components=None, externals=None, t_rows=None, X=None):
    """Training design: rows whose target and every regressor are observed.

    ``externals`` is the list of selected ``(column, lag)`` pairs taken from
    ``X``.

    Returns
    -------
    design : DesignMatrix
    target : ndarray
    rows : ndarray of int
        Grid positions of the training rows.
    """
    r = np.asarray(remainder, dtype=float)
    n = len(r)
    mat, names = regressor_matrix(r, lag_set, components, X, externals or ())
    rows = np.arange(n) if t_rows is None else np.asarray(t_rows, dtype=int)
    if rows.size and (rows.min() < 0 or rows.max() >= n):
        raise IndexError(f"training rows must lie in [0, {n})")
    ok = np.isfinite(r[rows]) & np.all(np.isfinite(mat[rows]), axis=1)
    rows = rows[ok]
    if rows.size == 0:
        raise ValueError("no usable training rows: every row misses a target or a lag; "
                         "use a smaller lag set")
    return DesignMatrix.from_array(mat[rows], names=names), r[rows], rows


@dataclass
class Replacements:
    """Modelled values for the cells that were missing.

    ``values[tau]`` and ``mean`` are aligned with ``indices``. ``provenance``
    maps each index to the regressors that were not observed when it was
    predicted (``"imputed:lag_k"`` or ``"fallback:lag_k"`` and so on).
    """

    indices: np.ndarray
    values: dict
    mean: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.indices)

    @property
    def taus(self) -> tuple[float, ...]:
        return tuple(sorted(self.values))

    def point(self) -> np.ndarray:
        """Median replacement, or the mean when no median was modelled."""
        return self.values.get(0.5, self.mean)


@dataclass
class MissingModel:
    col: int
    lag_set: LagSet
    selected_externals: list
    decomposition: Decomposition
    fits: dict
    taus: tuple[float, ...]
    recursive: bool
    regressor_names: list[str]
    phase_medians: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _training_rows(work, lag_set, comp, X, selected, min_rows):
    """Build the design, dropping the farthest lags until enough rows remain."""
    lags = lag_set
    dropped = []
    while True:
        mat, names = regressor_matrix(work, lags, comp, X, selected)
        ok = np.isfinite(work) & np.all(np.isfinite(mat), axis=1)
        need = max(min_rows, 20 * (mat.shape[1] + 1))
        if ok.sum() >= need or len(lags) == 0:
            return lags, dropped, mat, names, np.flatnonzero(ok)
        far = max(abs(v) for v in lags)
        lags = lags.without({far, -far})
        dropped.append(far)


def model_missing_data(frame, col=0, taus=(0.5,), externals=None, recursive: bool = True,
                       rho_min: float = 0.6, lag_set=None, p: int | None = None, ext_lags=(0,),
                       iterations: int = 2, lambda_rule="bic", seasonalities=None,
                       min_train_rows: int = 30, fit_mask=None):
    """Fit the replacement model for one series and predict its missing cells.

    Parameters
    ----------
    frame : SeriesFrame
    col : int or str
    taus : sequence of float
        Quantile levels to model (may be empty: mean only).
    externals : array-like of shape (n, q), optional
        Candidate external regressors; missing entries are NaN.
    recursive : bool
        Feed median predictions back as lagged regressors for later rows.
        Otherwise an unavailable lag cell is replaced by the remainder's
        phase median at that position.
    rho_min : float
        Correlation threshold for keeping an external (column, lag).
    lag_set : LagSet or iterable of int, optional
        Overrides the default lag set.
    p : int, optional
        Overrides the default AR order.
    fit_mask : array-like of bool, optional
        Cells treated as missing in addition to the frame's mask (used by the
        cleaning pipeline to hide flagged outliers).

    Returns
    -------
    model : MissingModel
    replacements : Replacements
    """
    if not isinstance(frame, SeriesFrame):
        raise TypeError("frame must be a SeriesFrame")
    j = frame.column(col)
    S = check_seasonalities(seasonalities if seasonalities is not None else frame.seasonalities, frame.n)
    if not S:
        raise ValueError("missing-value modelling needs at least one seasonality")
    taus = check_taus(taus)
    y = frame.series(j)
    if fit_mask is not None:
        y[np.asarray(fit_mask, dtype=bool)] = np.nan
    missing = np.isnan(y)
    n = len(y)
    if missing.all():
        raise ValueError(f"series {frame.names[j]!r} has no observed values")
    if n < 2 * max(S):
        raise ValueError(f"series length {n} is shorter than 2 * max(S) = {2 * max(S)}")

    X = None if externals is None else np.asarray(externals, dtype=float).reshape(n, -1)
    if lag_set is None:
        lag_set = default_lag_set(S, n, p)
    elif not isinstance(lag_set, LagSet):
        lag_set = LagSet(tuple(lag_set))

    selected, ext_report = [], {"correlations": {}, "warnings": []}
    if X is not None and X.shape[1]:
        selected, ext_report = select_externals(y, X, rho_min, ext_lags)
    ext_block = None
    if selected:
        ext_block = np.column_stack([shift(X[:, a], lag) for a, lag in selected])
    decomposition = robust_decompose(y, externals=ext_block, iterations=iterations,
                                     seasonalities=S, lambda_rule=lambda_rule)
    remainder = decomposition.remainder

    lags, dropped, mat, names, rows = _training_rows(remainder, lag_set, decomposition, X, selected,
                                                     min_train_rows)
    if rows.size == 0:
        raise ValueError("no usable training rows; use a smaller lag set")
    design = DesignMatrix.from_array(mat[rows], names=names)
    target = remainder[rows]

    fits: dict = {}
    path = fit_weighted_lasso(design, target)
    fits["mean"] = select_lambda(path, lambda_rule)
    fit_taus = list(taus)
    if recursive and taus and 0.5 not in taus:
        fit_taus.append(0.5)
    for tau in sorted(fit_taus):
        fits[tau] = fit_quantile(design, target, tau)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        s1 = S[0]
        pad = -(-n // s1) * s1
        buf = np.full(pad, np.nan)
        buf[:n] = remainder
        phase_med = np.nanmedian(buf.reshape(-1, s1), axis=0)
        phase_med = np.where(np.isnan(phase_med), 0.0, phase_med)
        ext_med = np.nanmedian(mat[:, len(lags):], axis=0) if mat.shape[1] > len(lags) else np.zeros(0)
    ext_med = np.where(np.isnan(ext_med), 0.0, ext_med)

    model = MissingModel(
        col=j,
        lag_set=lags,
        selected_externals=selected,
        decomposition=decomposition,
        fits=fits,
        taus=taus,
        recursive=recursive,
        regressor_names=names,
        phase_medians=phase_med,
        diagnostics={
            "n_train": int(rows.size),
            "dropped_lags": dropped,
            "externals": ext_report,
            "requested_lag_set": list(lag_set.lags),
        },
    )
    replacements = _predict_missing(model, remainder, mat, missing, ext_med)
    return model, replacements


def _predict_missing(model: MissingModel, remainder, mat, missing, ext_med) -> Replacements:
    idx = np.flatnonzero(missing)
    fit_keys = ["mean"] + sorted(k for k in model.fits if k != "mean")
    B = np.column_stack([model.fits[k].coefficients for k in fit_keys])
    b0 = np.array([model.fits[k].intercept for k in fit_keys])
    n = len(remainder)
    lags = np.array(model.lag_set.lags, dtype=int)
    n_lag = len(lags)
    s1 = len(model.phase_medians)
    write_key = 0.5 if 0.5 in model.fits else "mean"
    write_col = fit_keys.index(write_key)

    work = remainder.copy()
    imputed = np.zeros(n, dtype=bool)
    preds = np.empty((len(idx), len(fit_keys)))
    provenance = {}
    for row_i, t in enumerate(idx):
        x = mat[t].copy()
        notes = []
        src = t - lags
        for c in range(n_lag):
            s = src[c]
            v = work[s] if 0 <= s < n else np.nan
            if np.isnan(v):
                x[c] = model.phase_medians[s % s1]
                notes.append(f"fallback:lag_{lags[c]}")
            else:
                x[c] = v
                if imputed[s]:
                    notes.append(f"imputed:lag_{lags[c]}")
        rest = x[n_lag:]
        bad = ~np.isfinite(rest)
        if bad.any():
            rest[bad] = ext_med[bad]
            notes.extend(f"median:{model.regressor_names[n_lag + c]}" for c in np.flatnonzero(bad))
        preds[row_i] = b0 + x @ B
        if model.recursive:
            work[t] = preds[row_i, write_col]
            imputed[t] = True
        provenance[int(t)] = notes

    fitted = model.decomposition.fitted[idx]
    preds = preds + fitted[:, None]
    mean = preds[:, 0]
    q_keys = fit_keys[1:]
    q_preds = np.sort(preds[:, 1:], axis=1) if q_keys else preds[:, 1:]
    values = {tau: q_preds[:, q_keys.index(tau)] for tau in model.taus}
    return Replacements(indices=idx, values=values, mean=mean, provenance=provenance)


class MissingValueImputer(TransformerMixin, BaseEstimator):
    """Column-wise model-based imputer for an (n, m) array with NaN gaps.

    Every column is modelled in turn; the other columns are offered as
    external regressor candidates. ``transform`` returns the input with
    missing cells replaced by the ``quantile`` prediction.
    """

    def __init__(self, seasonalities=(48,), taus=(0.5,), quantile=0.5, recursive=True,
                 rho_min=0.6, lags=None, p=None, use_other_columns=True):
        self.seasonalities = seasonalities
        self.taus = taus
        self.quantile = quantile
        self.recursive = recursive
        self.rho_min = rho_min
        self.lags = lags
        self.p = p
        self.use_other_columns = use_other_columns

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        taus = check_taus(set(self.taus) | {self.quantile})
        frame = SeriesFrame.from_array(X, self.seasonalities)
        self.models_, self.replacements_ = [], []
        for j in range(frame.m):
            others = np.delete(X, j, axis=1) if self.use_other_columns and frame.m > 1 else None
            model, rep = model_missing_data(frame, j, taus, externals=others,
                                            recursive=self.recursive, rho_min=self.rho_min,
                                            lag_set=self.lags, p=self.p)
            self.models_.append(model)
            self.replacements_.append(rep)
        self.n_features_in_ = X.shape[1]
        self.n_samples_fit_ = X.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "models_")
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape != (self.n_samples_fit_, self.n_features_in_):
            raise ValueError(f"transform expects the fitted series of shape "
                             f"{(self.n_samples_fit_, self.n_features_in_)}, got {X.shape}")
        for j, rep in enumerate(self.replacements_):
            X[rep.indices, j] = rep.values[self.quantile]
        return X
