"""Missing-tolerant robust decomposition.

A series is split into a rolling-median trend, one periodic component per
seasonality (per-phase medians, centred) and an optional lasso fit on external
regressors. The stages are iterated a fixed number of times; whatever is left
is the remainder, which stays missing where the input was missing.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .frame import SeriesFrame, check_seasonalities
from .solvers import fit_weighted_lasso, select_lambda


@dataclass
class Decomposition:
    """Additive components of one series.

    ``seasonal`` has shape (K, n), one row per seasonality in ascending order;
    ``seasonal_tables[k]`` is the phase table that row ``k`` tiles.
    """

    y: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    seasonal_tables: list[np.ndarray]
    external: np.ndarray
    external_coef: np.ndarray
    remainder: np.ndarray
    seasonalities: tuple[int, ...]
    external_diagnostics: dict = field(default_factory=dict)

    @property
    def components_matrix(self) -> np.ndarray:
        """n x (K + 2) matrix ``[trend, seasonal_1 .. seasonal_K, external]``."""
        return np.column_stack([self.trend, *self.seasonal, self.external])

    @property
    def component_names(self) -> list[str]:
        return ["trend", *(f"seasonal_{s}" for s in self.seasonalities), "external"]

    @property
    def fitted(self) -> np.ndarray:
        return self.trend + self.seasonal.sum(axis=0) + self.external

    @property
    def n(self) -> int:
        return len(self.y)


def default_trend_window(seasonalities) -> int:
    w = max(seasonalities) + 1 if seasonalities else 3
    return w if w % 2 else w - 1


def robust_trend(y, window: int) -> np.ndarray:
    """Centred rolling median over the observed values.

    Missing values are NaN. The series is padded at both ends by point
    reflection about the end value (``y[-k] = 2 y[0] - y[k]``), so windows
    near the ends stay full and linear trends are reproduced exactly. Where a
    window holds no observation the trend is linearly interpolated between
    the nearest defined values and held constant beyond them.
    """
    y = np.asarray(y, dtype=float)
    if window < 3 or window % 2 == 0:
        raise ValueError(f"trend window must be odd and >= 3, got {window}")
    observed = ~np.isnan(y)
    if not observed.any():
        raise ValueError("cannot estimate a trend: every value is missing")
    n = len(y)
    half = min(window // 2, n - 1)
    head = 2 * y[0] - y[half:0:-1]
    tail = 2 * y[-1] - y[-2:-half - 2:-1]
    padded = np.concatenate([head, y, tail])
    trend = pd.Series(padded).rolling(window, center=True, min_periods=1).median().to_numpy()
    trend = trend[half:half + n]
    undefined = np.isnan(trend)
    if undefined.any():
        idx = np.arange(len(y))
        trend[undefined] = np.interp(idx[undefined], idx[~undefined], trend[~undefined])
    return trend


def seasonal_phase_medians(detrended, period: int) -> np.ndarray:
    """Per-phase medians of ``detrended`` (phase = index mod period), centred.

    Phases without any observation contribute 0 before centring.
    """
    x = np.asarray(detrended, dtype=float)
    period = int(period)
    n_rows = -(-len(x) // period)
    padded = np.full(n_rows * period, np.nan)
    padded[: len(x)] = x
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        table = np.nanmedian(padded.reshape(n_rows, period), axis=0)
    table = np.where(np.isnan(table), 0.0, table)
    return table - table.mean()


def expand_phase_table(table: np.ndarray, n: int) -> np.ndarray:
    return np.resize(table, n)


def external_component(remainder, X, lambda_rule="bic"):
    """Lasso fit of the remainder on external regressors.

    Rows where the remainder or any regressor is missing are left out of the
    fit. The returned component is ``(X - centre) @ coef`` evaluated on the
    full grid, with missing regressor values replaced by their column median,
    so a null fit yields an exactly zero component.

    Returns
    -------
    component : ndarray of shape (n,)
    coef : ndarray of shape (q,)
    diagnostics : dict
    """
    r = np.asarray(remainder, dtype=float)
    n = len(r)
    if X is None:
        return np.zeros(n), np.zeros(0), {}
    X = np.asarray(X, dtype=float).reshape(n, -1)
    q = X.shape[1]
    if q == 0:
        return np.zeros(n), np.zeros(0), {}
    rows = ~np.isnan(r) & np.all(np.isfinite(X), axis=1)
    if rows.sum() < 3:
        return np.zeros(n), np.zeros(q), {"skipped": "fewer than 3 usable rows"}
    path = fit_weighted_lasso(X[rows], r[rows])
    fit = select_lambda(path, lambda_rule)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(np.where(np.isfinite(X), X, np.nan), axis=0)
    Xf = np.where(np.isfinite(X), X, np.where(np.isnan(med), 0.0, med))
    centre = X[rows].mean(axis=0)
    component = (Xf - centre) @ fit.coefficients
    return component, fit.coefficients, {"lambda": fit.lam, "df": fit.df}


def seasonal_interactions(X, seasonal: np.ndarray) -> np.ndarray:
    """Products of each external column with each normalised seasonal shape."""
    X = np.asarray(X, dtype=float)
    cols = []
    for comp in seasonal:
        scale = np.sqrt(np.mean(comp**2))
        shape = comp / scale if scale > 0 else comp
        cols.append(X * shape[:, None])
    return np.column_stack(cols) if cols else np.zeros((len(X), 0))


def robust_decompose(frame, col=0, externals=None, iterations: int = 2, window: int | None = None,
                     seasonalities=None, lambda_rule="bic", interactions: bool = False) -> Decomposition:
    """Decompose one series into trend, seasonal, external and remainder parts.

    Parameters
    ----------
    frame : SeriesFrame or array-like
        Source series; NaN marks missing values when an array is given.
    col : int or str
        Series to decompose when ``frame`` is a SeriesFrame.
    externals : array-like of shape (n, q), optional
    iterations : int
        Number of trend / seasonal / external passes.
    window : int, optional
        Trend window; the largest odd integer <= max(S) + 1 by default.
    seasonalities : sequence of int, optional
        Overrides the frame's seasonalities.
    interactions : bool
        Also regress on external x seasonal-shape products.
    """
    if isinstance(frame, SeriesFrame):
        y = frame.series(col)
        S = tuple(seasonalities) if seasonalities is not None else frame.seasonalities
    else:
        y = np.asarray(frame, dtype=float).ravel()
        S = tuple(seasonalities or ())
    n = len(y)
    S = check_seasonalities(S, n)
    if S and n < 2 * max(S):
        raise ValueError(f"series length {n} is shorter than 2 * max(S) = {2 * max(S)}")
    if iterations < 1:
        raise ValueError("iterations must be positive")
    if window is None:
        window = default_trend_window(S)

    K = len(S)
    seasonal = np.zeros((K, n))
    tables = [np.zeros(s) for s in S]
    external = np.zeros(n)
    q = 0 if externals is None else np.asarray(externals).reshape(n, -1).shape[1]
    coef = np.zeros(q)
    diag: dict = {}
    for _ in range(iterations):
        trend = robust_trend(y - seasonal.sum(axis=0) - external, window)
        for k, s in enumerate(S):
            others = seasonal.sum(axis=0) - seasonal[k]
            tables[k] = seasonal_phase_medians(y - trend - others - external, s)
            seasonal[k] = expand_phase_table(tables[k], n)
        if q:
            X = np.asarray(externals, dtype=float).reshape(n, -1)
            if interactions:
                X = np.column_stack([X, seasonal_interactions(X, seasonal)])
            external, coef, diag = external_component(y - trend - seasonal.sum(axis=0), X, lambda_rule)
    remainder = y - (trend + seasonal.sum(axis=0) + external)
    return Decomposition(
        y=y,
        trend=trend,
        seasonal=seasonal,
        seasonal_tables=tables,
        external=external,
        external_coef=coef,
        remainder=remainder,
        seasonalities=S,
        external_diagnostics=diag,
    )


class RobustDecomposer(TransformerMixin, BaseEstimator):
    """Transformer wrapper: ``fit`` on a 1-d series, ``transform`` returns the
    components matrix ``[trend, seasonal..., external, remainder]``."""

    def __init__(self, seasonalities=(), iterations=2, window=None, lambda_rule="bic",
                 interactions=False):
        self.seasonalities = seasonalities
        self.iterations = iterations
        self.window = window
        self.lambda_rule = lambda_rule
        self.interactions = interactions

    def fit(self, y, X=None):
        y = np.asarray(y, dtype=float).ravel()
        self.decomposition_ = robust_decompose(
            y, externals=X, iterations=self.iterations, window=self.window,
            seasonalities=self.seasonalities, lambda_rule=self.lambda_rule,
            interactions=self.interactions,
        )
        self.n_features_in_ = 1
        return self

    def transform(self, y=None, X=None):
        check_is_fitted(self, "decomposition_")
        d = self.decomposition_
        return np.column_stack([d.components_matrix, d.remainder])

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "decomposition_")
        return np.array(self.decomposition_.component_names + ["remainder"], dtype=object)
