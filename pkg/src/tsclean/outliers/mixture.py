"""Finite Gaussian mixtures fitted by EM from a Ward-linkage partition.

Covariances are constrained to have eigenvalues of at least ``reg``. The
M-step solves that constrained problem exactly (eigenvalue clipping of the
weighted scatter matrix), so EM stays monotone in the log-likelihood even
when a component sits on a degenerate cluster.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.special import logsumexp

FAMILIES = ("spherical", "diagonal", "full")

_LOG_2PI = math.log(2 * math.pi)


@dataclass
class MixtureModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    family: str
    loglik: float
    n_fit: int
    outlier_component: int | None = None
    satellite_components: tuple[int, ...] = ()
    loglik_trace: list[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    removed_components: int = 0

    @property
    def G(self) -> int:
        return len(self.weights)

    @property
    def n_parameters(self) -> int:
        return n_parameters(self.family, self.G, self.means.shape[1])

    def bic(self, n: int | None = None) -> float:
        n = self.n_fit if n is None else n
        return 2.0 * self.loglik - self.n_parameters * math.log(n)

    def log_weighted_densities(self, X) -> np.ndarray:
        """``log(pi_k) + log f_k(x)`` for every row and component."""
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], self.G))
        for k in range(self.G):
            out[:, k] = math.log(self.weights[k]) + _log_gauss(X, self.means[k], self.covariances[k])
        return out

    def posterior(self, X) -> np.ndarray:
        lw = self.log_weighted_densities(X)
        return np.exp(lw - logsumexp(lw, axis=1, keepdims=True))

    @property
    def outlying_components(self) -> tuple[int, ...]:
        if self.outlier_component is None:
            return ()
        return tuple(sorted({self.outlier_component, *self.satellite_components}))

    def outlier_probability(self, X) -> np.ndarray:
        """Posterior mass of the outlier component and its satellites."""
        comps = list(self.outlying_components)
        if not comps:
            return np.zeros(np.asarray(X).shape[0])
        return self.posterior(X)[:, comps].sum(axis=1)

    def summary(self) -> dict:
        return {
            "G": self.G,
            "family": self.family,
            "loglik": self.loglik,
            "bic": self.bic(),
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "outlier_component": self.outlier_component,
            "satellite_components": list(self.satellite_components),
            "n_iter": self.n_iter,
            "converged": self.converged,
            "removed_components": self.removed_components,
        }


def n_parameters(family: str, G: int, d: int) -> int:
    cov = {"spherical": G, "diagonal": G * d, "full": G * d * (d + 1) // 2}[family]
    return G * d + cov + G - 1


def _log_gauss(X, mean, cov):
    d = X.shape[1]
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (X - mean).T)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (d * _LOG_2PI + logdet + np.sum(z * z, axis=0))


def _covariance(X, resp_k, mean, nk, family, reg):
    d = X.shape[1]
    diff = X - mean
    if family == "full":
        S = (resp_k[:, None] * diff).T @ diff / nk
        S = (S + S.T) / 2
        vals, vecs = np.linalg.eigh(S)
        return (vecs * np.maximum(vals, reg)) @ vecs.T
    var = resp_k @ diff**2 / nk
    if family == "diagonal":
        return np.diag(np.maximum(var, reg))
    if family == "spherical":
        return np.eye(d) * max(var.mean(), reg)
    raise ValueError(f"unknown covariance family {family!r}; choose from {FAMILIES}")


def _m_step(X, resp, family, reg):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    covs = np.stack([_covariance(X, resp[:, k], means[k], nk[k], family, reg)
                     for k in range(resp.shape[1])])
    return weights, means, covs


def default_reg(X) -> float:
    """Variance floor ``1e-8 * trace(Cov) / d`` (at least 1e-12)."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        return 1e-12
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    return max(1e-8 * float(np.trace(cov)) / X.shape[1], 1e-12)


def ward_tree(X) -> np.ndarray:
    return linkage(np.asarray(X, dtype=float), method="ward")


def hierarchical_init(X, G: int, tree: np.ndarray | None = None) -> np.ndarray:
    """Hard partition of ``X`` into ``G`` groups by Ward agglomeration.

    If duplicates leave fewer than ``G`` distinct groups, the largest group is
    split repeatedly: members farther from its medoid than the median
    distance form a new group (an index split when all are equidistant).
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if G < 1:
        raise ValueError("G must be positive")
    if G == 1:
        return np.zeros(n, dtype=int)
    if G >= n:
        return np.arange(n) % G
    if tree is None:
        tree = ward_tree(X)
    labels = fcluster(tree, G, criterion="maxclust") - 1
    _, labels = np.unique(labels, return_inverse=True)
    while labels.max() + 1 < G:
        sizes = np.bincount(labels)
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        pts = X[members]
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2) if len(pts) <= 2000 else None
        medoid = pts[np.argmin(dist.sum(axis=1))] if dist is not None else np.median(pts, axis=0)
        far = np.linalg.norm(pts - medoid, axis=1)
        split = far > np.median(far)
        if not split.any() or split.all():
            split = np.arange(len(members)) >= len(members) // 2
        labels[members[split]] = labels.max() + 1
    return labels


def fit_gmm_em(X, G: int, family: str = "full", init=None, reg: float | None = None,
               tol: float = 1e-8, max_iter: int = 500, tree=None) -> MixtureModel:
    """EM for a G-component Gaussian mixture.

    Parameters
    ----------
    X : array-like of shape (n, d)
    G : int
    family : {"spherical", "diagonal", "full"}
    init : array-like of int, optional
        Hard starting partition; Ward agglomeration when omitted.
    reg : float, optional
        Eigenvalue floor of every covariance; :func:`default_reg` by default.
    tol : float
        Stop when ``|delta loglik| < tol * |loglik|``.

    Components whose weight falls below ``1 / n`` are removed and EM goes on
    with the rest; the count is kept in ``removed_components``.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if family not in FAMILIES:
        raise ValueError(f"unknown covariance family {family!r}; choose from {FAMILIES}")
    if n < 2 * G:
        raise ValueError(f"need at least 2G = {2 * G} points, got {n}")
    if reg is None:
        reg = default_reg(X)
    if reg <= 0:
        raise ValueError("reg must be positive")
    labels = hierarchical_init(X, G, tree) if init is None else np.asarray(init, dtype=int)
    _, labels = np.unique(labels, return_inverse=True)
    resp = np.zeros((n, labels.max() + 1))
    resp[np.arange(n), labels] = 1.0
    weights, means, covs = _m_step(X, resp, family, reg)

    trace: list[float] = []
    removed = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        model = MixtureModel(weights, means, covs, family, float("nan"), n)
        lw = model.log_weighted_densities(X)
        norm = logsumexp(lw, axis=1)
        ll = float(norm.sum())
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol * abs(trace[-1]):
            converged = True
            break
        resp = np.exp(lw - norm[:, None])
        small = resp.sum(axis=0) < 1.0  # weight below 1/n
        if small.any() and resp.shape[1] > 1:
            keep = ~small
            if not keep.any():
                keep[np.argmax(resp.sum(axis=0))] = True
            removed += int((~keep).sum())
            resp = resp[:, keep]
            resp /= resp.sum(axis=1, keepdims=True)
            # likelihood of the reduced model is not comparable with the trace so far
            trace = []
        weights, means, covs = _m_step(X, resp, family, reg)
    if not converged:
        final = MixtureModel(weights, means, covs, family, float("nan"), n)
        trace.append(float(logsumexp(final.log_weighted_densities(X), axis=1).sum()))
    model = MixtureModel(weights, means, covs, family, trace[-1], n,
                         loglik_trace=trace, n_iter=it, converged=converged,
                         removed_components=removed)
    return model
