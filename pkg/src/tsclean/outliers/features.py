"""Time-series features for outlier detection.

Six features per observation, all computed from the completed series:

* ``gradient``              y[t] - y[t-1]
* ``abs_gradient``          |y[t] - (y[t-1] + y[t+1]) / 2|
* ``rel_gradient``          abs_gradient / (local same-phase MAD + delta)
* ``seasonal_trend_dev``    y[t] - (trend[t] + seasonal[t])
* ``seasonal_gradient``     y[t] - y[t-S1]
* ``abs_seasonal_gradient`` |y[t] - (y[t-S1] + y[t+S1]) / 2|

Two-sided features extrapolate linearly from the available side at the ends,
rescaled to the interior noise level.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..decompose import Decomposition, robust_decompose
from ..frame import SeriesFrame

FEATURE_NAMES = (
    "gradient",
    "abs_gradient",
    "rel_gradient",
    "seasonal_trend_dev",
    "seasonal_gradient",
    "abs_seasonal_gradient",
)

MAD_TO_SD = 1.4826


def _mad(x, axis=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.nanmedian(x, axis=axis, keepdims=True)
        return np.nanmedian(np.abs(x - med), axis=axis)


def two_sided_jump(y: np.ndarray, step: int) -> np.ndarray:
    """|y[t] - mean of the neighbours at distance ``step``|.

    Where only one side exists the comparison value is the linear
    extrapolation ``2 * y[t +- step] - y[t +- 2 * step]``, falling back to the
    single neighbour when that is all there is. Edge values are rescaled so
    that white noise has the same spread as in the interior (variance
    1.5 against 6 for the extrapolation and 2 for one neighbour).
    """
    n = len(y)
    out = np.zeros(n)
    if step >= n:
        return out
    idx = np.arange(n)
    inner = (idx >= step) & (idx < n - step)
    out[inner] = np.abs(y[inner] - (y[idx[inner] - step] + y[idx[inner] + step]) / 2)
    for t in idx[~inner]:
        sign = 1 if t < step else -1
        near, far = t + sign * step, t + 2 * sign * step
        if not 0 <= near < n:
            continue
        if 0 <= far < n:
            out[t] = 0.5 * abs(y[t] - 2 * y[near] + y[far])
        else:
            out[t] = np.sqrt(0.75) * abs(y[t] - y[near])
    return out


def local_phase_mad(y: np.ndarray, period: int, w: int) -> np.ndarray:
    """MAD of ``{y[t + j * period] : |j| <= w}`` (truncated at the ends)."""
    n = len(y)
    rows = -(-n // period)
    grid = np.full(rows * period, np.nan)
    grid[:n] = y
    grid = grid.reshape(rows, period)
    padded = np.full((rows + 2 * w, period), np.nan)
    padded[w:w + rows] = grid
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * w + 1, axis=0)
    mad = _mad(windows, axis=-1)
    return mad.reshape(-1)[:n]


@dataclass
class FeatureMatrix:
    """Raw and robustly standardized features.

    ``standardized`` keeps only the columns whose MAD is positive; their
    names are in ``names`` and the dropped ones in ``dropped``.
    """

    raw: np.ndarray
    standardized: np.ndarray
    names: list[str]
    centers: np.ndarray
    scales: np.ndarray
    dropped: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.raw.shape[0]


def raw_features(y, period: int, decomposition: Decomposition, w: int = 10) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    n = len(y)
    gradient = np.zeros(n)
    gradient[1:] = np.diff(y)
    abs_gradient = two_sided_jump(y, 1)
    scale = _mad(y)
    if not scale > 0:
        scale = np.max(np.abs(y)) if np.any(y) else 1.0
    delta = 1e-6 * scale
    rel_gradient = abs_gradient / (local_phase_mad(y, period, w) + delta)
    deterministic = decomposition.trend + decomposition.seasonal.sum(axis=0)
    dev = y - deterministic
    seasonal_gradient = np.zeros(n)
    if period < n:
        seasonal_gradient[period:] = y[period:] - y[:-period]
    abs_seasonal = two_sided_jump(y, period)
    return np.column_stack([gradient, abs_gradient, rel_gradient, dev, seasonal_gradient, abs_seasonal])


SCALE_FREE = ("rel_gradient",)


def standardize(raw: np.ndarray, names=FEATURE_NAMES, series_scale: float = 0.0) -> FeatureMatrix:
    """Centre by the median and scale by 1.4826 * MAD, dropping flat columns.

    A column counts as flat when its spread is at rounding level relative to
    its own magnitude or, for features measured in the units of the series,
    relative to ``series_scale``.
    """
    centers = np.median(raw, axis=0)
    scales = MAD_TO_SD * _mad(raw, axis=0)
    magnitude = np.max(np.abs(raw), axis=0) if len(raw) else np.zeros(raw.shape[1])
    unit = np.array([nm not in SCALE_FREE for nm in names])
    floor = 1e-9 * np.where(unit, np.maximum(magnitude, series_scale), magnitude)
    keep = scales > floor
    Z = (raw[:, keep] - centers[keep]) / scales[keep]
    return FeatureMatrix(
        raw=raw,
        standardized=Z,
        names=[nm for nm, k in zip(names, keep) if k],
        centers=centers[keep],
        scales=scales[keep],
        dropped=[nm for nm, k in zip(names, keep) if not k],
    )


def compute_features(frame, col=0, period: int | None = None, decomposition: Decomposition | None = None,
                     w: int = 10) -> FeatureMatrix:
    """Feature matrix of one fully observed series.

    Parameters
    ----------
    frame : SeriesFrame or array-like
    col : int or str
    period : int, optional
        Primary seasonality; the frame's first seasonality by default.
    decomposition : Decomposition, optional
        Computed with :func:`robust_decompose` when omitted.
    w : int
        Half-width, in periods, of the same-phase window for the local MAD.
    """
    if isinstance(frame, SeriesFrame):
        y = frame.series(col)
        S = frame.seasonalities
    else:
        y = np.asarray(frame, dtype=float).ravel()
        S = (period,) if period else ()
    if np.isnan(y).any():
        raise ValueError("outlier detection needs a complete series: impute missing values first")
    if period is None:
        if not S:
            raise ValueError("a primary seasonality is required")
        period = S[0]
    if decomposition is None:
        decomposition = robust_decompose(y, seasonalities=S or (period,))
    return standardize(raw_features(y, period, decomposition, w),
                       series_scale=float(np.max(np.abs(y - np.median(y)))))
