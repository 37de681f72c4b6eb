"""Standardisation and principal-component factors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError, NumericalError
from .panel import Panel


@dataclass(frozen=True, eq=False)
class PcaFit:
    factors: np.ndarray
    loadings: np.ndarray
    explained_variance: np.ndarray


def standardize(panel: Panel) -> tuple[Panel, np.ndarray, np.ndarray]:
    """Return the column-standardised panel plus the means and sds used.

    Uses the unbiased (ddof=1) sample standard deviation.
    """
    x = panel.values
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    scale = np.maximum(np.abs(means), 1.0)
    bad = np.flatnonzero(sds <= 1e-12 * scale)
    if bad.size:
        label = panel.series_labels[bad[0]]
        raise InputError(f"series {label!r} is constant; cannot standardise")
    return panel.with_values((x - means) / sds), means, sds


def fix_signs(loadings: np.ndarray) -> np.ndarray:
    """Per-column signs making each column's first nonzero entry nonnegative."""
    signs = np.ones(loadings.shape[1])
    for j in range(loadings.shape[1]):
        col = loadings[:, j]
        nz = np.flatnonzero(np.abs(col) > 0)
        if nz.size and col[nz[0]] < 0:
            signs[j] = -1.0
    return signs


def pca_factors(panel: Panel | np.ndarray, r: int) -> PcaFit:
    """Principal-component factors normalised so that ``F'F / T = I``.

    Factors are ``sqrt(T)`` times the leading left singular vectors of the
    data matrix and loadings are the least-squares coefficients ``X'F / T``.
    """
    x = panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    T, n = x.shape
    if not 1 <= r <= min(T, n):
        raise ConfigError(f"need 1 <= r <= min(T, n) = {min(T, n)}, got r={r}")
    u, s, _ = np.linalg.svd(x, full_matrices=False)
    tol = s[0] * max(T, n) * np.finfo(float).eps if s.size else 0.0
    if s.size < r or s[r - 1] <= tol:
        raise NumericalError(f"data matrix has rank below r={r}")
    factors = np.sqrt(T) * u[:, :r]
    loadings = x.T @ factors / T
    signs = fix_signs(loadings)
    return PcaFit(factors * signs, loadings * signs, s[:r] ** 2 / T)
