from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class DesignMatrix:
    """Fully observed regressor matrix with its standardization record.

    Columns with zero (weighted) variance are dropped on construction; their
    positions are kept in ``dropped`` so coefficients can be mapped back to
    the caller's column order.
    """

    values: np.ndarray
    names: list[str]
    col_centers: np.ndarray
    col_scales: np.ndarray
    n_input_cols: int
    kept: np.ndarray
    dropped: list[int] = field(default_factory=list)

    @classmethod
    def from_array(cls, X, w=None, names=None) -> "DesignMatrix":
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError(f"design matrix must be 2-d, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("design matrix contains non-finite values")
        n, p = X.shape
        if names is None:
            names = [f"x{j}" for j in range(p)]
        if w is None:
            w = np.ones(n)
        w = np.asarray(w, dtype=float)
        sw = w.sum()
        if sw <= 0:
            raise ValueError("sum of weights must be positive")
        centers = w @ X / sw if p else np.zeros(0)
        scales = np.sqrt(w @ (X - centers) ** 2 / sw) if p else np.zeros(0)
        # relative floor: a column that is constant up to rounding is constant
        floor = 1e-12 * np.maximum(1.0, np.abs(centers))
        kept = np.flatnonzero(scales > floor)
        dropped = [int(j) for j in np.setdiff1d(np.arange(p), kept)]
        return cls(
            values=X[:, kept],
            names=[names[j] for j in kept],
            col_centers=centers[kept],
            col_scales=scales[kept],
            n_input_cols=p,
            kept=kept,
            dropped=dropped,
        )

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def standardized(self) -> np.ndarray:
        return (self.values - self.col_centers) / self.col_scales

    def expand(self, coef: np.ndarray) -> np.ndarray:
        """Scatter coefficients of kept columns into the input column order."""
        full = np.zeros(self.n_input_cols)
        full[self.kept] = coef
        return full


def as_design(X, w=None) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    return DesignMatrix.from_array(X, w=w)


@dataclass
class FitResult:
    """Outcome of one regression fit.

    ``coefficients`` are on the original column scale and cover every input
    column (dropped columns get 0). ``target`` is ``"mean"`` or the quantile
    level as a float.
    """

    intercept: float
    coefficients: np.ndarray
    target: object
    lam: float | None = None
    objective: float = float("nan")
    n_iter: int = 0
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return self.intercept + X @ self.coefficients

    @property
    def df(self) -> int:
        return int(np.count_nonzero(self.coefficients))
