"""Linear quantile regression under the pinball (check) loss.

The solver runs a primal-dual interior-point method of Frisch-Newton type on
the dual of the quantile LP and then crosses over to an exact basic solution
with a small simplex-style pivoting loop. The crossover makes the returned fit
an interpolating vertex, which gives exact equivariance and lets small
instances be certified against brute-force enumeration.
"""
from __future__ import annotations

import numpy as np

from ._design import DesignMatrix, FitResult, as_design


def pinball_loss(residuals, tau: float) -> float:
    """Sum of check losses ``rho_tau(u) = u * (tau - 1[u < 0])``."""
    u = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("residuals must be finite")
    _check_tau(tau)
    return float(np.sum(u * (tau - (u < 0))))


def _check_tau(tau: float) -> None:
    if not (0.0 < float(tau) < 1.0):
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")


def _step_bound(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1e20
    return float(np.min(-v[neg] / dv[neg]))


def _solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(M)
        return np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(M, rhs, rcond=None)[0]


def _frisch_newton(Z, y, tau, beta=0.99995, eps=1e-9, max_iter=100):
    """Interior point on ``max y'a  s.t.  Z'a = (1 - tau) Z'1, 0 <= a <= 1``.

    Returns the primal coefficient vector (the negated dual of the LP in the
    ``a`` variables) and the iteration count.
    """
    n, k = Z.shape
    c = -y
    x = np.full(n, 1.0 - tau)
    b = Z.T @ x
    u = np.ones(n)
    s = u - x
    d = np.linalg.lstsq(Z, c, rcond=None)[0]
    r = c - Z @ d
    r = r + 0.001 * (r == 0)
    z = np.where(r > 0, r, 0.0)
    w = z - r
    gap = c @ x - d @ b + w @ u
    it = 0
    scale = max(1.0, float(np.abs(y).sum()))
    with np.errstate(all="ignore"):
        while gap > eps * scale and it < max_iter:
            it += 1
            step = _newton_step(Z, b, c, u, x, s, d, w, z, n, beta)
            if step is None:
                # degenerate (e.g. exactly fittable) data; keep the last finite iterate
                break
            x, s, d, w, z = step
            gap = c @ x - d @ b + w @ u
    return -d, it


def _newton_step(Z, b, c, u, x, s, d, w, z, n, beta):
    """One predictor-corrector step; None if it leaves finite arithmetic."""
    q = 1.0 / (z / x + w / s)
    r = z - w
    ZQ = Z * q[:, None]
    M = Z.T @ ZQ
    rhs = ZQ.T @ r
    dd = _solve_spd(M, rhs)
    dx = q * (Z @ dd - r)
    ds = -dx
    dz = -z * (dx / x + 1.0)
    dw = -w * (ds / s + 1.0)
    fp = min(beta * min(_step_bound(x, dx), _step_bound(s, ds)), 1.0)
    fd = min(beta * min(_step_bound(w, dw), _step_bound(z, dz)), 1.0)
    if min(fp, fd) < 1.0:
        # Mehrotra-style corrector with adaptive centring
        mu = z @ x + w @ s
        g = (z + fd * dz) @ (x + fp * dx) + (w + fd * dw) @ (s + fp * ds)
        mu = mu * (g / mu) ** 3 / (2.0 * n)
        dxdz = dx * dz
        dsdw = ds * dw
        xinv = 1.0 / x
        sinv = 1.0 / s
        xi = mu * (xinv - sinv)
        rhs = rhs + Z.T @ (q * (dxdz - dsdw - xi))
        dd = _solve_spd(M, rhs)
        dx = q * (Z @ dd + xi - r - dxdz + dsdw)
        ds = -dx
        dz = mu * xinv - z - xinv * z * dx - dxdz
        dw = mu * sinv - w - sinv * w * ds - dsdw
        fp = min(beta * min(_step_bound(x, dx), _step_bound(s, ds)), 1.0)
        fd = min(beta * min(_step_bound(w, dw), _step_bound(z, dz)), 1.0)
    new = (x + fp * dx, s + fp * ds, d + fd * dd, w + fd * dw, z + fd * dz)
    if not all(np.all(np.isfinite(v)) for v in new):
        return None
    return new


def _initial_basis(Z, resid):
    """Greedy pick of ``k`` independent rows with the smallest |residual|."""
    n, k = Z.shape
    order = np.argsort(np.abs(resid), kind="stable")
    basis: list[int] = []
    Q = np.zeros((k, 0))
    for i in order:
        v = Z[i]
        v_perp = v - Q @ (Q.T @ v)
        nv = np.linalg.norm(v_perp)
        if nv > 1e-9 * max(1.0, np.linalg.norm(v)):
            basis.append(int(i))
            Q = np.column_stack([Q, v_perp / nv])
            if len(basis) == k:
                return basis
    return None


def _directional_slopes(T, r, basic, tau, tol):
    """Right derivatives of the objective along all 2k vertex edges.

    ``T = Z @ inv(Z_h)``; edge ``(i, s)`` moves the fit off basic row ``i``
    in direction ``s`` while staying on the other basic rows.
    """
    nonbasic = np.ones(len(r), dtype=bool)
    nonbasic[basic] = False
    nb_r = r[nonbasic]
    nb_T = T[nonbasic]
    zero = np.abs(nb_r) <= tol
    psi = tau - (nb_r < 0)
    base = -(nb_T[~zero].T @ psi[~zero])
    Td = nb_T[zero]
    up = base + (1.0 - tau) + np.sum(np.maximum(Td * (1 - tau), -Td * tau), axis=0)
    down = -base + tau + np.sum(np.maximum(-Td * (1 - tau), Td * tau), axis=0)
    return up, down


def _crossover(Z, y, tau, start, max_pivots):
    n, k = Z.shape
    basic = _initial_basis(Z, y - Z @ start)
    if basic is None:
        return None
    scale = max(1.0, float(np.max(np.abs(y))))
    tol = 1e-10 * scale
    pivots = 0
    while pivots <= max_pivots:
        Zh = Z[basic]
        try:
            Zh_inv = np.linalg.inv(Zh)
        except np.linalg.LinAlgError:
            return None
        coef = Zh_inv @ y[basic]
        r = y - Z @ coef
        r[basic] = 0.0
        T = Z @ Zh_inv
        up, down = _directional_slopes(T, r, basic, tau, tol)
        slopes = np.concatenate([up, down])
        slope_tol = 1e-10 * max(1.0, float(np.abs(T).sum(axis=0).max()))
        j = int(np.argmin(slopes))
        if slopes[j] < -slope_tol:
            mode = "descend"
        else:
            # optimal vertex; slide along flat edges that lower the intercept
            direction_int = np.concatenate([Zh_inv[0], -Zh_inv[0]])
            flat = np.flatnonzero((np.abs(slopes) <= slope_tol) & (direction_int < -1e-12))
            if flat.size == 0:
                return coef, pivots, True, basic
            j = int(flat[0])
            mode = "flat"
        i, sign = (j, 1.0) if j < k else (j - k, -1.0)
        a = sign * T[:, i]
        a[basic] = 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(np.abs(a) > 1e-14, r / a, -np.inf)
        cand = np.flatnonzero((t > 0) & (np.abs(r) > tol))
        if cand.size == 0:
            if mode == "flat":
                return coef, pivots, True, basic
            return coef, pivots, False, basic
        cand = cand[np.argsort(t[cand], kind="stable")]
        if mode == "flat":
            enter = int(cand[0])
        else:
            g = slopes[j] + np.cumsum(np.abs(a[cand]))
            stop = np.flatnonzero(g >= -slope_tol)
            enter = int(cand[stop[0]] if stop.size else cand[-1])
        basic = list(basic)
        basic[i] = enter
        pivots += 1
    Zh_inv = np.linalg.inv(Z[basic])
    return Zh_inv @ y[basic], pivots, False, basic


def fit_quantile(X, y, tau: float, max_pivots: int | None = None) -> FitResult:
    """Minimise ``sum rho_tau(y - b0 - X b)`` over intercept and slopes.

    Parameters
    ----------
    X : array-like of shape (n, p) or DesignMatrix
        Regressors without intercept column; ``p`` may be 0.
    y : array-like of shape (n,)
    tau : float
        Quantile level in (0, 1).
    max_pivots : int, optional
        Cap on crossover pivots; defaults to ``10 * (p + 1) + 200``.

    Returns
    -------
    FitResult
        ``converged`` is False when the design is rank deficient or the
        crossover did not certify optimality; the best iterate is returned.
        When the optimum is not unique the solution with the smallest
        intercept is chosen (the lower endpoint in the intercept-only case).
    """
    _check_tau(tau)
    y = np.asarray(y, dtype=float)
    if isinstance(X, DesignMatrix):
        design = X
    else:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(len(y), -1)
        design = as_design(X)
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    n = len(y)
    if design.n_obs != n:
        raise ValueError(f"X has {design.n_obs} rows but y has {n}")
    Z = np.column_stack([np.ones(n), design.standardized()])
    k = Z.shape[1]
    y_center = float(np.median(y))
    y_scale = float(np.mean(np.abs(y - y_center)))
    if y_scale <= 0:
        y_scale = 1.0
    ys = (y - y_center) / y_scale

    start, ip_iter = _frisch_newton(Z, ys, tau)
    ip_obj = pinball_loss(ys - Z @ start, tau)
    if max_pivots is None:
        max_pivots = 10 * k + 200
    polished = _crossover(Z, ys, tau, start, max_pivots) if n >= k else None
    converged = False
    pivots = 0
    coef = start
    basis = None
    if polished is not None:
        vcoef, pivots, ok, vbasis = polished
        v_obj = pinball_loss(ys - Z @ vcoef, tau)
        if ok or v_obj <= ip_obj:
            coef = vcoef
            converged = ok
            basis = list(vbasis)
    if basis is not None:
        # interpolate the basic observations in original units, so they are fitted exactly
        theta = np.linalg.solve(Z[basis], y[basis])
        slopes = theta[1:] / design.col_scales
        intercept = theta[0] - slopes @ design.col_centers
    else:
        slopes = coef[1:] / design.col_scales * y_scale
        intercept = y_center + y_scale * coef[0] - slopes @ design.col_centers
    full = design.expand(slopes)
    resid = y - intercept - design.values @ slopes
    return FitResult(
        intercept=float(intercept),
        coefficients=full,
        target=float(tau),
        objective=pinball_loss(resid, tau),
        n_iter=ip_iter + pivots,
        converged=converged,
        diagnostics={
            "interior_point_iterations": ip_iter,
            "crossover_pivots": pivots,
            "dropped_columns": list(design.dropped),
        },
    )
