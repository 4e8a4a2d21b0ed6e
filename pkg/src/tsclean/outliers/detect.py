from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_is_fitted

from ..decompose import robust_decompose
from ..frame import SeriesFrame
from .features import FeatureMatrix, compute_features
from .mixture import FAMILIES, MixtureModel, default_reg, fit_gmm_em, hierarchical_init, ward_tree


@dataclass(frozen=True)
class DetectOptions:
    G_max: int = 5
    families: tuple[str, ...] = FAMILIES
    subsets: int = 10
    subset_size: int = 5000
    alpha: float = 0.05
    c: float = 25.0
    threshold: float = 0.5
    seed: int | None = None
    mad_window: int = 10
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.alpha <= 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if not self.c > 1:
            raise ValueError(f"c must exceed 1, got {self.c}")
        if not 0 <= self.threshold <= 1:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.G_max < 1 or self.subsets < 1 or self.subset_size < 2:
            raise ValueError("G_max, subsets and subset_size must be positive")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ValueError(f"unknown covariance families {bad}; choose from {FAMILIES}")


@dataclass
class OutlierReport:
    """Result of :func:`detect_outliers`.

    ``causes`` maps each flagged index to the smallest feature sets whose
    reset to the regular-data mean drops the outlier probability below the
    threshold (``"a+b"`` for a pair), or to ``["joint"]``.
    """

    probabilities: np.ndarray
    flagged: np.ndarray
    causes: dict
    subset_counts: np.ndarray
    features: FeatureMatrix
    model: MixtureModel
    runs: list = field(default_factory=list)
    threshold: float = 0.5

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "probabilities": [float(p) for p in self.probabilities],
            "flagged": [int(i) for i in self.flagged],
            "causes": {str(k): v for k, v in self.causes.items()},
            "subset_counts": [int(c) for c in self.subset_counts],
            "features": self.features.names,
            "dropped_features": self.features.dropped,
            "model": self.model.summary(),
            "runs": self.runs,
        }


def seed_outlier_component(F, alpha: float = 0.05, c: float = 25.0, seed=None):
    """Append ``ceil(alpha * n)`` draws from N(mean(F), c * Cov(F)).

    Returns
    -------
    augmented : ndarray of shape (n + k, d)
    synthetic : ndarray of int
        Row indices of the synthetic points inside ``augmented``.
    """
    if not 0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5], got {alpha}")
    if not c > 1:
        raise ValueError(f"c must exceed 1, got {c}")
    F = np.asarray(F, dtype=float)
    n, d = F.shape
    k = math.ceil(alpha * n)
    rng = np.random.default_rng(seed)
    cov = np.atleast_2d(np.cov(F, rowvar=False))
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2)
    vals = np.maximum(vals, default_reg(F))
    draws = rng.standard_normal((k, d)) * np.sqrt(c * vals) @ vecs.T + F.mean(axis=0)
    return np.vstack([F, draws]), np.arange(n, n + k)


def identify_outlier_component(model: MixtureModel, X, synthetic) -> int | None:
    """Component holding most synthetic points; ties go to the larger determinant."""
    if model.G == 1:
        return None
    labels = np.argmax(model.posterior(X[synthetic]), axis=1)
    counts = np.bincount(labels, minlength=model.G)
    best = np.flatnonzero(counts == counts.max())
    if len(best) == 1:
        return int(best[0])
    dets = [np.linalg.slogdet(model.covariances[k])[1] for k in best]
    return int(best[int(np.argmax(dets))])


def satellite_components(model: MixtureModel, c: float = 25.0, level: float = 0.999) -> tuple[int, ...]:
    """Components centred outside the c-inflated ``level`` ellipsoid of the core.

    The core is the heaviest component. Tight clusters of anomalies (a
    flat-lined day, say) win their own component instead of joining the
    broad synthetic one; they are recognised by how far they sit from the
    regular data.
    """
    if model.outlier_component is None:
        return ()
    core = int(np.argmax(model.weights))
    if core == model.outlier_component:
        return ()
    d = model.means.shape[1]
    radius2 = c * chi2.ppf(level, d)
    L = np.linalg.cholesky(model.covariances[core])
    out = []
    for k in range(model.G):
        if k in (core, model.outlier_component):
            continue
        z = np.linalg.solve(L, model.means[k] - model.means[core])
        if z @ z > radius2:
            out.append(k)
    return tuple(out)


def _fit_subset(F, options: DetectOptions, child_seed):
    rng = np.random.default_rng(child_seed)
    n = F.shape[0]
    m = min(options.subset_size, n)
    subset = np.sort(rng.choice(n, m, replace=False))
    aug, synthetic = seed_outlier_component(F[subset], options.alpha, options.c, rng)
    tree = ward_tree(aug)
    reg = default_reg(aug)
    best, best_bic = None, -np.inf
    for family in options.families:
        for G in range(1, options.G_max + 1):
            if aug.shape[0] < 2 * G:
                break
            model = fit_gmm_em(aug, G, family, init=hierarchical_init(aug, G, tree), reg=reg)
            bic = model.bic()
            if bic > best_bic:
                best, best_bic = model, bic
    best.outlier_component = identify_outlier_component(best, aug, synthetic)
    best.satellite_components = satellite_components(best, options.c)
    return best, subset


def attribute_causes(model: MixtureModel, F, flagged, threshold: float = 0.5, names=None) -> dict:
    """Name the features responsible for each flagged observation.

    Each flagged row has single features (then pairs) reset to the weighted
    mean of the non-outlier components; a feature set is a cause when the
    recomputed outlier probability falls below ``threshold``.
    """
    Z = F.standardized if isinstance(F, FeatureMatrix) else np.asarray(F, dtype=float)
    if names is None:
        names = F.names if isinstance(F, FeatureMatrix) else [f"f{j}" for j in range(Z.shape[1])]
    out: dict = {}
    outlying = model.outlying_components
    flagged = [int(t) for t in flagged]
    if not outlying or not flagged:
        return out
    regular = [k for k in range(model.G) if k not in outlying]
    w = model.weights[regular]
    centre = (w[:, None] * model.means[regular]).sum(axis=0) / w.sum()
    d = Z.shape[1]
    p_now = model.outlier_probability(Z[flagged])
    for t, p in zip(flagged, p_now):
        if p <= threshold:
            continue
        x = Z[t]
        found = []
        for size in (1, 2):
            combos = list(itertools.combinations(range(d), size))
            trial = np.repeat(x[None, :], len(combos), axis=0)
            for row, cols in enumerate(combos):
                trial[row, list(cols)] = centre[list(cols)]
            probs = model.outlier_probability(trial)
            found = ["+".join(names[j] for j in cols)
                     for cols, q in zip(combos, probs) if q < threshold]
            if found:
                break
        out[t] = found or ["joint"]
    return out


def detect_outliers(frame, col=0, S1: int | None = None, options: DetectOptions | None = None,
                    decomposition=None, **kwargs) -> OutlierReport:
    """Outlier probabilities of a complete series from feature-space mixtures.

    Features are standardized robustly. For each of ``options.subsets``
    random subsets the data are augmented with synthetic outliers, mixtures
    with 1..G_max components and every covariance family are fitted, and the
    BIC-best model scores all observations by the posterior of the outlier
    component. Probabilities are averaged over subsets.

    Keyword arguments override fields of ``options``.
    """
    options = DetectOptions(**{**(options.__dict__ if options else {}), **kwargs})
    if isinstance(frame, SeriesFrame):
        y = frame.series(col)
        S = frame.seasonalities
    else:
        y = np.asarray(frame, dtype=float).ravel()
        S = (S1,) if S1 else ()
    if S1 is None:
        if not S:
            raise ValueError("a primary seasonality S1 is required")
        S1 = S[0]
    if np.isnan(y).any():
        raise ValueError("outlier detection needs a complete series: impute missing values first")
    if decomposition is None:
        decomposition = robust_decompose(y, seasonalities=S or (S1,))
    F = compute_features(y, period=S1, decomposition=decomposition, w=options.mad_window)
    Z = F.standardized
    n = len(y)
    if Z.shape[1] == 0:
        empty = MixtureModel(np.ones(1), np.zeros((1, 0)), np.zeros((1, 0, 0)), "full", 0.0, n)
        return OutlierReport(np.zeros(n), np.zeros(0, dtype=int), {}, np.zeros(n, dtype=int), F,
                             empty, threshold=options.threshold)

    children = np.random.SeedSequence(options.seed).spawn(options.subsets)
    if options.threads > 1:
        with ThreadPoolExecutor(options.threads) as pool:
            fits = list(pool.map(lambda s: _fit_subset(Z, options, s), children))
    else:
        fits = [_fit_subset(Z, options, s) for s in children]

    total = np.zeros(n)
    runs = []
    for model, subset in fits:
        total += model.outlier_probability(Z)
        runs.append({"G": model.G, "family": model.family, "bic": model.bic(),
                     "outlier_component": model.outlier_component,
                     "satellite_components": list(model.satellite_components), "subset_size": int(len(subset))})
    probabilities = np.clip(total / len(fits), 0.0, 1.0)
    flagged = np.flatnonzero(probabilities > options.threshold)
    last = fits[-1][0]
    causes = attribute_causes(last, F, flagged, options.threshold)
    for t in flagged:
        causes.setdefault(int(t), ["joint"])
    return OutlierReport(
        probabilities=probabilities,
        flagged=flagged,
        causes=causes,
        subset_counts=np.full(n, len(fits), dtype=int),
        features=F,
        model=last,
        runs=runs,
        threshold=options.threshold,
    )


class OutlierDetector(OutlierMixin, BaseEstimator):
    """Estimator wrapper around :func:`detect_outliers` for a 1-d series.

    ``fit_predict`` returns -1 for flagged observations and 1 otherwise.
    """

    def __init__(self, seasonality=48, G_max=5, families=FAMILIES, subsets=10, subset_size=5000,
                 alpha=0.05, c=25.0, threshold=0.5, random_state=None, threads=1):
        self.seasonality = seasonality
        self.G_max = G_max
        self.families = families
        self.subsets = subsets
        self.subset_size = subset_size
        self.alpha = alpha
        self.c = c
        self.threshold = threshold
        self.random_state = random_state
        self.threads = threads

    def fit(self, X, y=None):
        series = np.asarray(X, dtype=float).ravel()
        opts = DetectOptions(G_max=self.G_max, families=tuple(self.families), subsets=self.subsets,
                             subset_size=self.subset_size, alpha=self.alpha, c=self.c,
                             threshold=self.threshold, seed=self.random_state, threads=self.threads)
        self.report_ = detect_outliers(series, S1=self.seasonality, options=opts)
        self.probabilities_ = self.report_.probabilities
        self.n_features_in_ = 1
        labels = np.ones(len(series), dtype=int)
        labels[self.report_.flagged] = -1
        self.labels_ = labels
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_

    def score_samples(self, X=None):
        check_is_fitted(self, "report_")
        return -self.probabilities_
