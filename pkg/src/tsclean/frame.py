"""Series container, missing-value semantics and CSV ingestion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd


class IngestionError(ValueError):
    """Raised when an input file cannot be turned into a valid series frame."""


def check_seasonalities(seasonalities, n: int | None = None) -> tuple[int, ...]:
    S = tuple(int(s) for s in seasonalities)
    for s, raw in zip(S, seasonalities):
        if s != raw:
            raise ValueError(f"seasonalities must be integers, got {raw!r}")
    if any(s < 2 for s in S):
        raise ValueError(f"every seasonality must be >= 2, got {S}")
    if list(S) != sorted(set(S)):
        raise ValueError(f"seasonalities must be sorted ascending without duplicates, got {S}")
    if n is not None and any(s >= n for s in S):
        raise ValueError(f"seasonalities {S} must be smaller than the series length {n}")
    return S


@dataclass(frozen=True)
class SeriesFrame:
    """Equidistant multivariate series with an authoritative missing mask.

    ``values`` holds NaN wherever ``missing_mask`` is set. ``raw_values``
    keeps whatever was there before a cell was re-coded as missing (for
    example a sentinel zero), so recoding stays auditable.
    """

    timestamps: pd.Index
    values: np.ndarray
    missing_mask: np.ndarray
    seasonalities: tuple[int, ...] = ()
    names: tuple[str, ...] = ()
    raw_values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        mask = np.array(self.missing_mask, dtype=bool).reshape(values.shape)
        n, m = values.shape
        if n < 2:
            raise ValueError("a series frame needs at least two observations")
        mask = mask | np.isnan(values)
        values[mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)
        ts = pd.Index(self.timestamps)
        if len(ts) != n:
            raise ValueError(f"{len(ts)} timestamps for {n} rows")
        object.__setattr__(self, "timestamps", ts)
        names = tuple(self.names) or tuple(f"y{j}" for j in range(m))
        if len(names) != m:
            raise ValueError(f"{len(names)} names for {m} series")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "seasonalities", check_seasonalities(self.seasonalities, n))
        raw = values.copy() if self.raw_values is None else np.array(self.raw_values, dtype=float).reshape(n, m)
        raw.setflags(write=False)
        object.__setattr__(self, "raw_values", raw)

    @classmethod
    def from_array(cls, values, seasonalities=(), names=(), timestamps=None, mask=None):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if timestamps is None:
            timestamps = pd.RangeIndex(values.shape[0])
        if mask is None:
            mask = np.isnan(values)
        return cls(timestamps, values, mask, tuple(seasonalities), tuple(names))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def column(self, col) -> int:
        """Resolve a series name or position to a column index."""
        if isinstance(col, str):
            try:
                return self.names.index(col)
            except ValueError:
                raise KeyError(f"no series named {col!r}; available: {list(self.names)}") from None
        col = int(col)
        if not 0 <= col < self.m:
            raise IndexError(f"column {col} out of range for {self.m} series")
        return col

    def series(self, col) -> np.ndarray:
        return self.values[:, self.column(col)].copy()

    def with_values(self, values, mask=None) -> "SeriesFrame":
        values = np.asarray(values, dtype=float).reshape(self.values.shape)
        if mask is None:
            mask = np.isnan(values)
        return replace(self, values=values, missing_mask=mask, raw_values=None)

    def with_seasonalities(self, seasonalities) -> "SeriesFrame":
        return replace(self, seasonalities=tuple(seasonalities))

    def to_pandas(self) -> pd.DataFrame:
        return pd.DataFrame(np.array(self.values), index=self.timestamps, columns=list(self.names))


@dataclass(frozen=True)
class MissingSpec:
    """Values to re-code as missing.

    With ``whole_period_only`` a sentinel run is re-coded only where it fills
    an entire aligned period of ``period`` observations (periods are anchored
    at the first row). ``period=None`` means the frame's first seasonality.
    """

    sentinel_values: tuple[float, ...] = ()
    whole_period_only: bool = False
    period: int | None = None


def apply_missing_spec(frame: SeriesFrame, spec: MissingSpec) -> SeriesFrame:
    if not spec.sentinel_values:
        return frame
    period = spec.period
    if spec.whole_period_only:
        if period is None:
            if not frame.seasonalities:
                raise ValueError("whole_period_only needs a period or a seasonality")
            period = frame.seasonalities[0]
        if period <= 0:
            raise ValueError(f"period must be positive, got {period}")
        if period > frame.n:
            raise ValueError(f"period {period} exceeds series length {frame.n}")
    elif period is not None and period <= 0:
        raise ValueError(f"period must be positive, got {period}")

    raw = np.array(frame.raw_values)
    mask = np.array(frame.missing_mask)
    hit = np.isin(raw, np.asarray(spec.sentinel_values, dtype=float)) & ~mask
    if spec.whole_period_only:
        n_full = frame.n // period
        keep = np.zeros_like(hit)
        if n_full:
            h = hit[: n_full * period].reshape(n_full, period, -1)
            mm = mask[: n_full * period].reshape(n_full, period, -1)
            # already-missing cells do not break an otherwise sentinel period
            whole = np.all(h | mm, axis=1) & np.any(h, axis=1)
            keep[: n_full * period] = (h & whole[:, None, :]).reshape(n_full * period, -1)
        hit = keep
    new_mask = mask | hit
    values = np.array(frame.values)
    values[new_mask] = np.nan
    return replace(frame, values=values, missing_mask=new_mask, raw_values=raw)


def _runs(mask_col: np.ndarray) -> list[int]:
    """Lengths of consecutive True runs."""
    if not mask_col.any():
        return []
    padded = np.concatenate([[False], mask_col, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    return [int(v) for v in edges[1::2] - edges[::2]]


def summary(frame: SeriesFrame) -> dict:
    """Per-series missing counts, gap structure and seasonal coverage.

    ``period_coverage[S]`` is the share of aligned full periods of length S
    that contain no missing cell.
    """
    out = {}
    for j, name in enumerate(frame.names):
        col = frame.missing_mask[:, j]
        runs = _runs(col)
        coverage = {}
        for s in frame.seasonalities:
            n_full = frame.n // s
            if n_full == 0:
                coverage[s] = float("nan")
                continue
            blocks = col[: n_full * s].reshape(n_full, s)
            coverage[s] = float(np.mean(~blocks.any(axis=1)))
        out[name] = {
            "n": frame.n,
            "n_missing": int(col.sum()),
            "n_gaps": len(runs),
            "longest_gap": max(runs, default=0),
            "period_coverage": coverage,
        }
    return out


def _parse_index(raw: pd.Series) -> pd.Index:
    text = raw.astype(str).str.strip()
    if text.str.fullmatch(r"[+-]?\d+").all():
        return pd.Index(text.astype(np.int64))
    try:
        return pd.DatetimeIndex(pd.to_datetime(text, format="ISO8601"))
    except (ValueError, TypeError) as exc:
        raise IngestionError(f"first column is neither integer nor ISO-8601: {exc}") from None


def _fmt_step(step) -> str:
    return str(pd.Timedelta(step)) if isinstance(step, (pd.Timedelta, np.timedelta64)) else str(step)


def load_csv(path, seasonalities: Sequence[int] = (), missing_spec: MissingSpec | None = None,
             columns: Sequence[str] | None = None) -> SeriesFrame:
    """Read a CSV whose first column is a timestamp or integer index.

    Empty fields and NaN become missing. Holes in the time grid are filled
    with all-missing rows; duplicate, decreasing or irregular timestamps are
    rejected.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if df.shape[1] < 2:
        raise IngestionError(f"{path}: need a timestamp column and at least one series")
    index = _parse_index(df.iloc[:, 0])
    names = [str(c) for c in df.columns[1:]]
    if columns is not None:
        missing = [c for c in columns if c not in names]
        if missing:
            raise IngestionError(f"{path}: unknown columns {missing}")
        names = list(columns)
    body = df[names].apply(lambda s: s.str.strip())
    try:
        values = body.mask(body.isin(["", "NA", "NaN", "nan"]), "nan").astype(float).to_numpy()
    except ValueError as exc:
        raise IngestionError(f"{path}: non-numeric value: {exc}") from None

    diffs = index[1:] - index[:-1]
    step_values = np.asarray(diffs)
    zero = step_values == step_values.dtype.type(0)
    if zero.any():
        i = int(np.flatnonzero(zero)[0]) + 1
        raise IngestionError(f"{path}: duplicate timestamp {index[i]} at row {i}")
    neg = step_values < step_values.dtype.type(0)
    if neg.any():
        i = int(np.flatnonzero(neg)[0]) + 1
        raise IngestionError(f"{path}: timestamps not increasing at row {i} ({index[i - 1]} -> {index[i]})")
    if len(step_values):
        uniq, counts = np.unique(step_values, return_counts=True)
        step = uniq[np.argmax(counts)]
        ratio = step_values / step
        bad = np.flatnonzero(np.abs(ratio - np.round(ratio)) > 1e-9)
        if bad.size or uniq.min() < step:
            other = step_values[bad[0]] if bad.size else uniq.min()
            raise IngestionError(
                f"{path}: mixed sampling periods {_fmt_step(step)} and {_fmt_step(other)}"
            )
        if len(uniq) > 1:
            pos = np.concatenate([[0], np.cumsum(np.round(ratio).astype(np.int64))])
            full = np.full((pos[-1] + 1, values.shape[1]), np.nan)
            full[pos] = values
            values = full
            if isinstance(index, pd.DatetimeIndex):
                index = pd.date_range(index[0], periods=len(values), freq=pd.Timedelta(step))
            else:
                index = pd.Index(index[0] + step * np.arange(len(values)))
    index = index.rename(str(df.columns[0]))
    frame = SeriesFrame(index, values, np.isnan(values), tuple(seasonalities), tuple(names))
    if missing_spec is not None:
        frame = apply_missing_spec(frame, missing_spec)
    return frame


def _format_value(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def format_tau(tau: float) -> str:
    return repr(float(tau))


def format_index(ts) -> str:
    if isinstance(ts, pd.Timestamp):
        return ts.isoformat()
    return str(ts)


def write_matrix(path, timestamps, columns, data, index_name: str = "timestamp") -> Path:
    """Write ``data`` (rows aligned with ``timestamps``) under the given header.

    Finite values use shortest round-trip precision, NaN an empty field.
    """
    path = Path(path)
    data = np.asarray(data, dtype=float).reshape(len(timestamps), len(columns))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([index_name, *columns])
        for ts, row in zip(timestamps, data):
            writer.writerow([format_index(ts)] + [_format_value(v) for v in row])
    return path


def write_csv(frame: SeriesFrame, path, imputed: dict | None = None, include_original: bool = True) -> Path:
    """Write the frame, optionally followed by ``<name>_imputed_q<tau>`` columns."""
    header = []
    blocks = []
    if include_original:
        header += list(frame.names)
        blocks.append(np.asarray(frame.values))
    for tau, mat in sorted((imputed or {}).items()):
        header += [f"{name}_imputed_q{format_tau(tau)}" for name in frame.names]
        blocks.append(np.asarray(mat, dtype=float).reshape(frame.n, frame.m))
    data = np.hstack(blocks) if blocks else np.zeros((frame.n, 0))
    return write_matrix(path, frame.timestamps, header, data, frame.timestamps.name or "timestamp")
