"""Imputation study: block-wise masking, baselines and MAE / runtime tables."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .frame import SeriesFrame
from .missing import model_missing_data


@dataclass(frozen=True)
class StudyConfig:
    shares: tuple[float, ...] = (0.01, 0.05, 0.1, 0.2, 0.5)
    repetitions: int = 20
    block_mean: float = 12.0
    block_sd: float = 6.0
    seed: int = 1
    methods: tuple[str, ...] = ("model", "linear", "locf", "seasonal_median")
    threads: int = 1
    model_options: dict = field(default_factory=dict)

    def __post_init__(self):
        shares = tuple(float(s) for s in self.shares)
        if list(shares) != sorted(shares):
            raise ValueError(f"shares must be sorted ascending, got {shares}")
        for s in shares:
            if not 0.0 < s < 1.0:
                raise ValueError(f"every share must lie in (0, 1), got {s}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        if self.block_mean <= 0 or self.block_sd <= 0:
            raise ValueError("block_mean and block_sd must be positive")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; available: {sorted(METHODS)}")
        object.__setattr__(self, "shares", shares)


def lognormal_params(mean: float, sd: float) -> tuple[float, float]:
    """Log-scale (mu, sigma) of a log-normal with the given natural-scale moments."""
    sigma2 = math.log1p((sd / mean) ** 2)
    return math.log(mean) - sigma2 / 2, math.sqrt(sigma2)


def generate_mar_mask(n: int, share: float, block_mean: float = 12.0, block_sd: float = 6.0,
                      seed=None, guard: int = 0) -> np.ndarray:
    """Mask contiguous blocks until at least ``share * n`` cells are hidden.

    Block lengths are log-normal with natural-scale mean ``block_mean`` and
    standard deviation ``block_sd`` (rounded, at least 1). Each block starts
    at a uniformly drawn unmasked position inside ``[guard, n - guard)`` and
    is clipped to that range, so the first and last ``guard`` cells are never
    hidden.
    """
    target = share * n
    if target < 1:
        raise ValueError(f"share * n = {target:.3g} < 1: nothing to mask")
    lo, hi = guard, n - guard
    if target > 0.9 * n or target > hi - lo:
        raise ValueError(f"cannot mask {target:.0f} of {n} cells (limit 0.9 n inside the guard)")
    rng = np.random.default_rng(seed)
    mu, sigma = lognormal_params(block_mean, block_sd)
    mask = np.zeros(n, dtype=bool)
    count = 0
    while count < target:
        length = max(1, int(round(rng.lognormal(mu, sigma))))
        free = np.flatnonzero(~mask[lo:hi]) + lo
        start = int(free[rng.integers(len(free))])
        stop = min(start + length, hi)
        mask[start:stop] = True
        count = int(mask.sum())
    return mask


def locf(y, mask=None) -> np.ndarray:
    """Last observation carried forward; leading gaps take the next observation."""
    y = np.array(y, dtype=float)
    if mask is not None:
        y[np.asarray(mask, dtype=bool)] = np.nan
    return pd.Series(y).ffill().bfill().to_numpy()


def linear_interp(y, mask=None) -> np.ndarray:
    """Linear interpolation between observed neighbours, constant at the ends."""
    y = np.array(y, dtype=float)
    if mask is not None:
        y[np.asarray(mask, dtype=bool)] = np.nan
    obs = ~np.isnan(y)
    idx = np.arange(len(y))
    y[~obs] = np.interp(idx[~obs], idx[obs], y[obs])
    return y


def seasonal_median(y, mask=None, period: int = 48) -> np.ndarray:
    """Fill each gap with the median of the observed values at the same phase."""
    y = np.array(y, dtype=float)
    if mask is not None:
        y[np.asarray(mask, dtype=bool)] = np.nan
    phase = np.arange(len(y)) % period
    med = pd.Series(y).groupby(phase).median().reindex(range(period))
    med = med.fillna(np.nanmedian(y)).to_numpy()
    gaps = np.isnan(y)
    y[gaps] = med[phase[gaps]]
    return y


def _model_method(y_masked, mask, seasonalities, **options):
    frame = SeriesFrame.from_array(y_masked, seasonalities)
    _, rep = model_missing_data(frame, 0, taus=(0.5,), **options)
    out = np.array(y_masked, dtype=float)
    out[rep.indices] = rep.point()
    return out


METHODS = {
    "model": _model_method,
    "model_nonrecursive": lambda y, m, S, **o: _model_method(y, m, S, **{**o, "recursive": False}),
    "linear": lambda y, m, S, **o: linear_interp(y, m),
    "locf": lambda y, m, S, **o: locf(y, m),
    "seasonal_median": lambda y, m, S, **o: seasonal_median(y, m, S[0]),
    # perfect imputer; self-test of the harness
    "oracle": None,
}


def _run_cell(truth, seasonalities, config, share, rep_seed):
    mask = generate_mar_mask(len(truth), share, config.block_mean, config.block_sd,
                             seed=rep_seed, guard=max(seasonalities))
    y = truth.copy()
    y[mask] = np.nan
    rows = []
    for name in config.methods:
        func = METHODS[name]
        start = time.perf_counter()
        try:
            if name == "oracle":
                est = truth.copy()
            else:
                opts = config.model_options if name.startswith("model") else {}
                est = func(y, mask, seasonalities, **opts)
            mae = float(np.mean(np.abs(est[mask] - truth[mask])))
        except Exception as exc:  # a failing method is a missing table cell
            mae = float("nan")
            rows.append({"method": name, "share": share, "mae": mae, "seconds": float("nan"),
                         "error": f"{type(exc).__name__}: {exc}"})
            continue
        rows.append({"method": name, "share": share, "mae": mae,
                     "seconds": time.perf_counter() - start, "error": ""})
    return rows


def run_study(frame, config: StudyConfig, col=0, seasonalities=None) -> pd.DataFrame:
    """Run every method on every (share, repetition) mask.

    Returns the long per-run table with columns ``method, share, repetition,
    mae, seconds, error``. Use :func:`summarize` for the method x share view.
    """
    if isinstance(frame, SeriesFrame):
        truth = frame.series(col)
        S = tuple(seasonalities or frame.seasonalities)
    else:
        truth = np.asarray(frame, dtype=float).ravel()
        S = tuple(seasonalities or ())
    if not S:
        raise ValueError("the study needs at least one seasonality")
    if np.isnan(truth).any():
        raise ValueError("the study needs a fully observed series")
    children = np.random.SeedSequence(config.seed).spawn(len(config.shares) * config.repetitions)
    jobs = [(share, r, children[i * config.repetitions + r])
            for i, share in enumerate(config.shares) for r in range(config.repetitions)]

    def job(item):
        share, r, ss = item
        rows = _run_cell(truth, S, config, share, ss)
        for row in rows:
            row["repetition"] = r
        return rows

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(job, jobs))
    else:
        results = [job(item) for item in jobs]
    table = pd.DataFrame([row for rows in results for row in rows])
    return table[["method", "share", "repetition", "mae", "seconds", "error"]]


def summarize(table: pd.DataFrame, value: str = "mae") -> pd.DataFrame:
    """Mean of ``value`` per method (rows) and share (columns)."""
    out = table.pivot_table(index="method", columns="share", values=value, aggfunc="mean",
                            dropna=False, sort=False)
    out.columns = [f"{c:g}" for c in out.columns]
    return out
