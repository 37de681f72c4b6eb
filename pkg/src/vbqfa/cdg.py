"""Loss-based quantile factors by alternating quantile regressions.

Minimises the total check loss ``sum_it rho_tau(x_it - lambda_i' f_t)`` over
factors and loadings, solving each per-series and per-period regression with
IRLS on a smoothed check loss.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, NumericalError
from .panel import Panel, check_loss
from .pca import fix_signs, pca_factors, standardize as _standardize

log = logging.getLogger(__name__)

SMOOTHING = 1e-6


@dataclass(frozen=True, eq=False)
class CdgFit:
    factors: np.ndarray
    loadings: np.ndarray
    final_loss: float
    iters: int
    converged: bool
    loss_trace: tuple[float, ...] = ()
    smoothed_trace: tuple[float, ...] = ()


def smoothed_check_loss(u, tau, eps=SMOOTHING):
    """``sqrt(u^2 + eps^2)/2 + (tau - 1/2) u``; equals the check loss at ``eps=0``."""
    u = np.asarray(u, dtype=float)
    return 0.5 * np.sqrt(u * u + eps * eps) + (tau - 0.5) * u


def _vertex_polish(Y, X, B, tau, slack=1e-9):
    """Try to finish each row at an exact basic solution.

    A check-loss minimiser interpolates ``k`` observations. Taking the ``k``
    smallest residuals as the basis ``h``, the vertex ``X_h b = y_h`` is
    optimal iff the basis multipliers ``g`` solving
    ``X_h' g = -sum_{i not in h} psi_tau(r_i) x_i`` lie in ``[tau-1, tau]``.
    Returns the vertices and a mask of rows where that certificate holds.
    """
    m, N = Y.shape
    k = X.shape[1]
    E = Y - B @ X.T
    h = np.argsort(np.abs(E), axis=1)[:, :k]
    Xh = X[h]
    ok = np.linalg.cond(Xh) < 1e10
    out = B.copy()
    if not ok.any():
        return out, ok
    Xh, h, idx = Xh[ok], h[ok], np.flatnonzero(ok)
    V = np.linalg.solve(Xh, Y[idx[:, None], h][..., None])[..., 0]
    R = Y[idx] - V @ X.T
    psi = tau - (R < 0)
    psi[np.arange(len(idx))[:, None], h] = 0.0
    g = np.linalg.solve(np.swapaxes(Xh, 1, 2), -(psi @ X)[..., None])[..., 0]
    cert = np.all((g >= tau - 1 - slack) & (g <= tau + slack), axis=1)
    out[idx[cert]] = V[cert]
    mask = np.zeros(m, dtype=bool)
    mask[idx[cert]] = True
    return out, mask


def _lp_rows(Y, X, tau):
    """Exact check-loss regressions as linear programs (HiGHS)."""
    N, k = X.shape
    c = np.r_[np.zeros(k), np.full(N, tau), np.full(N, 1.0 - tau)]
    A = np.c_[X, np.eye(N), -np.eye(N)]
    bounds = [(None, None)] * k + [(0, None)] * (2 * N)
    out = np.empty((Y.shape[0], k))
    ok = np.zeros(Y.shape[0], dtype=bool)
    for j, y in enumerate(Y):
        res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs")
        if res.status == 0:
            out[j], ok[j] = res.x[:k], True
    return out, ok


def _mm_steps(Y, X, XX, B, tau, eps, max_iter, tol, polish_every=0):
    m, k = B.shape
    shift = (tau - 0.5) * X.sum(axis=0)
    done = np.zeros(m, dtype=bool)
    obj = smoothed_check_loss(Y - B @ X.T, tau, eps).sum(axis=1)
    for it in range(1, max_iter + 1):
        act = np.flatnonzero(~done)
        E = Y[act] - B[act] @ X.T
        W = 0.5 / np.sqrt(E * E + eps * eps)
        G = (W @ XX).reshape(-1, k, k)
        rhs = (W * Y[act]) @ X + shift
        try:
            B_new = np.linalg.solve(G, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NumericalError("singular weighted normal equations") from exc
        obj_new = smoothed_check_loss(Y[act] - B_new @ X.T, tau, eps).sum(axis=1)
        B[act] = B_new
        done[act[obj[act] - obj_new <= tol * obj_new]] = True
        obj[act] = obj_new
        if polish_every and it % polish_every == 0:
            act = np.flatnonzero(~done)
            V, cert = _vertex_polish(Y[act], X, B[act], tau)
            B[act[cert]] = V[cert]
            done[act[cert]] = True
        if done.all():
            break
    return B, done


def irls_quantile(Y, X, tau, B0=None, eps=SMOOTHING, max_iter=100, tol=1e-9, continuation=True):
    """Row-wise quantile regressions of ``Y`` (m x N) on a shared design ``X`` (N x k).

    Each step is the majorise-minimise update for the smoothed check loss

        beta <- (X'WX)^-1 (X'Wy + (tau - 1/2) X'1),  W = diag(1 / (2 sqrt(e^2 + eps^2)))

    so the smoothed objective never increases. Every few steps, and once at
    the end, rows are finished at an exact vertex when its optimality
    certificate holds (see ``_vertex_polish``); rows that still lack a
    certificate are solved as linear programs. With ``continuation`` the
    smoothing starts at ``0.1 * sd(Y)`` and shrinks tenfold per stage down
    to ``eps``, which avoids the slow crawl of tiny-``eps`` IRLS along kinks;
    without it (used for warm starts) only the final ``eps`` stage runs.
    Returns ``(B, converged)``; ``converged`` is false only for rows whose
    fallback linear program failed and whose MM steps never settled.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    X = np.asarray(X, dtype=float)
    m, N = Y.shape
    k = X.shape[1]
    if X.shape[0] != N:
        raise ConfigError(f"design has {X.shape[0]} rows, response has {N}")
    if N <= k or np.linalg.matrix_rank(X) < k:
        raise NumericalError("design matrix is rank deficient")
    XX = (X[:, :, None] * X[:, None, :]).reshape(N, k * k)
    if B0 is None:
        B = np.linalg.lstsq(X, Y.T, rcond=None)[0].T
    else:
        B = np.array(B0, dtype=float, copy=True).reshape(m, k)
    stages = [eps]
    if continuation:
        e = 0.1 * max(float(np.std(Y)), eps)
        while e > eps:
            stages.insert(-1, e)
            e *= 0.1
    for e in stages[:-1]:
        B, _ = _mm_steps(Y, X, XX, B, tau, e, max_iter, 1e-6)
    B, done = _mm_steps(Y, X, XX, B, tau, eps, max_iter, tol, polish_every=5)
    V, cert = _vertex_polish(Y, X, B, tau)
    B[cert] = V[cert]
    rest = np.flatnonzero(~cert)
    if rest.size:
        # MM can stall on an edge of the optimal face; finish those rows exactly
        V, ok = _lp_rows(Y[rest], X, tau)
        B[rest[ok]] = V[ok]
        done[rest] = ok | done[rest]
    done |= cert
    if not np.all(np.isfinite(B)):
        raise NumericalError("non-finite quantile regression coefficients")
    return B, done


def qreg_fit(y, X, tau, eps=SMOOTHING, max_iter=100, tol=1e-9):
    """Quantile regression coefficients of ``y`` on ``X``."""
    if not 0 < tau < 1:
        raise ConfigError(f"quantile level must lie in (0, 1), got {tau}")
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    B, ok = irls_quantile(y[None, :], X, tau, eps=eps, max_iter=max_iter, tol=tol)
    if not ok[0]:
        raise NumericalError(f"quantile regression did not converge in {max_iter} iterations")
    return B[0]


def _normalise(F, L):
    """Rotate so ``F'F/T = I`` and ``L'L`` is diagonal (descending), with
    loading columns starting nonnegative; ``F L'`` is unchanged."""
    T = F.shape[0]
    S = F.T @ F / T
    vals, vecs = np.linalg.eigh(S)
    if np.any(vals <= 0):
        raise NumericalError("factor matrix lost rank")
    root = vecs * np.sqrt(vals) @ vecs.T
    inv_root = vecs / np.sqrt(vals) @ vecs.T
    F, L = F @ inv_root, L @ root
    lv, lvec = np.linalg.eigh(L.T @ L)
    lvec = lvec[:, np.argsort(lv)[::-1]]
    F, L = F @ lvec, L @ lvec
    d = fix_signs(L)
    return F * d, L * d


def cdg_fit(
    panel,
    r: int,
    tau: float,
    max_outer: int = 100,
    tol: float = 1e-6,
    standardize: bool = True,
    eps: float = SMOOTHING,
    max_inner: int = 100,
) -> CdgFit:
    """Alternating check-loss minimisation started from principal components.

    Stops once the relative improvement of the total check loss falls below
    ``tol``. Inner regressions are warm-started, so the smoothed objective is
    nonincreasing across outer iterations.
    """
    if not 0 < tau < 1:
        raise ConfigError(f"quantile level must lie in (0, 1), got {tau}")
    if not isinstance(panel, Panel):
        panel = Panel(panel)
    if not 1 <= r < min(panel.T, panel.n):
        raise ConfigError(f"need 1 <= r < min(T, n) = {min(panel.T, panel.n)}, got r={r}")
    if standardize:
        panel, _, _ = _standardize(panel)
    x = panel.values

    F = pca_factors(x, r).factors
    L = None
    losses, smoothed = [], []
    prev = np.inf
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        try:
            L, _ = irls_quantile(
                x.T, F, tau, B0=L, eps=eps, max_iter=max_inner, continuation=L is None
            )
        except NumericalError as exc:
            raise NumericalError(f"loading regressions failed: {exc}", iteration=it) from exc
        try:
            F, _ = irls_quantile(x, L, tau, B0=F, eps=eps, max_iter=max_inner, continuation=False)
        except NumericalError as exc:
            raise NumericalError(f"factor regressions failed: {exc}", iteration=it) from exc
        F, L = _normalise(F, L)
        resid = x - F @ L.T
        loss = float(np.sum(check_loss(resid, tau)))
        losses.append(loss)
        smoothed.append(float(np.sum(smoothed_check_loss(resid, tau, eps))))
        if prev - loss <= tol * max(prev, 1e-300) and np.isfinite(prev):
            converged = True
            break
        prev = loss
    log.debug("cdg tau=%.3f r=%d: %d outer iterations, loss %.6f", tau, r, it, losses[-1])
    return CdgFit(F, L, losses[-1], it, converged, tuple(losses), tuple(smoothed))
