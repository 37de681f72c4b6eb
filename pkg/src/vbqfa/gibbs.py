"""Gibbs sampler for the quantile factor model.

Draws every block from its full conditional under the same likelihood and
priors as the variational engine, so its posterior means serve as a
reference for the mean-field approximation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .errors import ConfigError, NumericalError
from .mixture import GIG_FLOOR
from .panel import EstimatorConfig, Panel, QuantileSpec, make_quantile_spec
from .pca import pca_factors, standardize

log = logging.getLogger(__name__)

FIXABLE = ("z", "sigma", "alpha", "factors", "intercept")


@dataclass(frozen=True)
class GibbsConfig:
    """Chain length settings. ``fixed`` clamps blocks (by name in ``FIXABLE``)
    to given values instead of sampling them."""

    n_draws: int = 5000
    burn_in: int = 1000
    thin: int = 2
    seed: int = 0
    fixed: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.burn_in < 0:
            raise ConfigError(f"burn_in must be nonnegative, got {self.burn_in}")
        if self.n_draws <= self.burn_in:
            raise ConfigError(
                f"n_draws={self.n_draws} must exceed burn_in={self.burn_in}; no draws would be kept"
            )
        if self.thin < 1:
            raise ConfigError(f"thin must be at least 1, got {self.thin}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        unknown = set(self.fixed) - set(FIXABLE)
        if unknown:
            raise ConfigError(f"cannot fix unknown blocks {sorted(unknown)}; choose from {FIXABLE}")

    @property
    def n_kept(self) -> int:
        return len(range(self.burn_in, self.n_draws, self.thin))


@dataclass(frozen=True, eq=False)
class GibbsDraws:
    """Kept draws, stacked along the first axis.

    Factor and loading draws are rotated onto the starting principal
    components (orthogonal Procrustes per draw) so that averaging them is
    meaningful; the product ``f lambda'`` of each draw is unchanged.
    """

    tau: float
    factor_draws: np.ndarray  # (D, T, r)
    loading_draws: np.ndarray  # (D, n, r)
    sigma_draws: np.ndarray  # (D, n)
    z_draws: np.ndarray  # (D, n, T)
    alpha_draws: np.ndarray  # (D, n, r)
    intercept_draws: np.ndarray  # (D, n)

    @property
    def n_kept(self) -> int:
        return self.factor_draws.shape[0]

    @property
    def factor_mean(self) -> np.ndarray:
        return self.factor_draws.mean(axis=0)

    @property
    def loading_mean(self) -> np.ndarray:
        return self.loading_draws.mean(axis=0)


def sample_gig_half(a, b, rng):
    """Draw from GIG(1/2, a, b) as the reciprocal of an inverse-Gaussian variate.

    If ``y ~ IG(mean sqrt(a/b), shape a)`` then ``1/y`` has density
    proportional to ``z**-0.5 exp(-(a z + b/z)/2)``.
    """
    a = np.maximum(np.asarray(a, dtype=float), GIG_FLOOR)
    b = np.maximum(np.asarray(b, dtype=float), GIG_FLOOR)
    y = rng.wald(np.sqrt(a / b), a)
    return 1.0 / y


def _gaussian_draw(P, rhs, rng, block):
    """One draw from ``N(P^-1 rhs, P^-1)`` for a batch of precisions."""
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("precision matrix is not positive definite", block=block) from exc
    Lt = np.swapaxes(L, -1, -2)
    mean = np.linalg.solve(Lt, np.linalg.solve(L, rhs[..., None]))[..., 0]
    eps = rng.standard_normal(rhs.shape)
    return mean + np.linalg.solve(Lt, eps[..., None])[..., 0]


def _draw_loadings(x, F, z, sigma, alpha, q, rng):
    T, r = F.shape
    w = 1.0 / (q.kappa2_sq * sigma[:, None] * z)  # (n, T)
    FF = (F[:, :, None] * F[:, None, :]).reshape(T, r * r)
    P = (w @ FF).reshape(-1, r, r) + alpha[:, :, None] * np.eye(r)
    rhs = (w * (x.T - q.kappa1 * z)) @ F
    return _gaussian_draw(P, rhs, rng, "loadings")


def _draw_factors(x, L, z, sigma, q, rng):
    n, r = L.shape
    w = 1.0 / (q.kappa2_sq * sigma[:, None] * z)
    LL = (L[:, :, None] * L[:, None, :]).reshape(n, r * r)
    P = (w.T @ LL).reshape(-1, r, r) + np.eye(r)
    rhs = (w * (x.T - q.kappa1 * z)).T @ L
    return _gaussian_draw(P, rhs, rng, "factors")


def _draw_z(x, L, F, sigma, q, rng):
    e = x.T - L @ F.T
    a = (2.0 + q.kappa1**2 / q.kappa2_sq) / sigma[:, None] * np.ones_like(e)
    b = e * e / (q.kappa2_sq * sigma[:, None])
    return sample_gig_half(a, b, rng)


def _draw_sigma(x, L, F, z, q, config, rng):
    T = x.shape[0]
    u = x.T - L @ F.T - q.kappa1 * z
    scale = config.s0 + np.sum(u * u / (2.0 * q.kappa2_sq * z) + z, axis=1)
    shape = config.r0 + 1.5 * T
    return scale / rng.gamma(shape, 1.0, size=scale.shape)


def _draw_intercept(x, L, F, z, sigma, q, v0, rng):
    w = 1.0 / (q.kappa2_sq * sigma[:, None] * z)
    prec = w.sum(axis=1) + 1.0 / v0
    rhs = np.sum(w * (x.T - L @ F.T - q.kappa1 * z), axis=1)
    return rhs / prec + rng.standard_normal(prec.shape) / np.sqrt(prec)


def _draw_alpha(L, config, rng):
    rate = config.b0 + 0.5 * L * L
    return rng.gamma(config.a0 + 0.5, 1.0 / rate)


def _fixed_value(value, shape):
    arr = np.broadcast_to(np.asarray(value, dtype=float), shape).copy()
    if not np.all(np.isfinite(arr)):
        raise ConfigError("fixed block values must be finite")
    return arr


def gibbs_fit(panel, config: EstimatorConfig, tau=None, gibbs: GibbsConfig | None = None) -> GibbsDraws:
    """Run the sampler at one quantile level.

    Each cycle draws, in order, loadings, loading precisions, intercepts
    (when enabled), mixture weights, scales and factors from their full
    conditionals. The chain starts at the principal-component factors with
    zero intercepts and unit weights, scales and precisions.
    """
    gibbs = gibbs or GibbsConfig(seed=config.seed)
    q = tau if isinstance(tau, QuantileSpec) else make_quantile_spec(
        config.quantiles[0].tau if tau is None else tau
    )
    if not isinstance(panel, Panel):
        panel = Panel(panel)
    config.validate_for(panel)
    if config.standardize:
        panel, _, _ = standardize(panel)
    x = panel.values
    T, n = x.shape
    r = config.n_factors
    rng = np.random.default_rng(gibbs.seed)
    fixed = gibbs.fixed

    ref = pca_factors(x, r).factors
    F = _fixed_value(fixed["factors"], (T, r)) if "factors" in fixed else ref.copy()
    z = _fixed_value(fixed.get("z", 1.0), (n, T))
    sigma = _fixed_value(fixed.get("sigma", 1.0), (n,))
    alpha = _fixed_value(fixed.get("alpha", 1.0), (n, r))
    m = _fixed_value(fixed.get("intercept", 0.0), (n,))

    D = gibbs.n_kept
    out_f = np.empty((D, T, r))
    out_l = np.empty((D, n, r))
    out_s = np.empty((D, n))
    out_z = np.empty((D, n, T))
    out_a = np.empty((D, n, r))
    out_m = np.empty((D, n))
    k = 0
    for it in range(gibbs.n_draws):
        try:
            L = _draw_loadings(x - m, F, z, sigma, alpha, q, rng)
            if "alpha" not in fixed:
                alpha = _draw_alpha(L, config, rng)
            if config.intercept and "intercept" not in fixed:
                m = _draw_intercept(x, L, F, z, sigma, q, config.intercept_prior_var, rng)
            if "z" not in fixed:
                z = _draw_z(x - m, L, F, sigma, q, rng)
            if "sigma" not in fixed:
                sigma = _draw_sigma(x - m, L, F, z, q, config, rng)
            if "factors" not in fixed:
                F = _draw_factors(x - m, L, z, sigma, q, rng)
        except NumericalError as exc:
            raise NumericalError(f"draw {it}: {exc}") from exc
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(L))):
            raise NumericalError(f"non-finite state at draw {it}")
        if it >= gibbs.burn_in and (it - gibbs.burn_in) % gibbs.thin == 0:
            R = np.eye(r) if "factors" in fixed else orthogonal_procrustes(F, ref)[0]
            out_f[k], out_l[k] = F @ R, L @ R
            out_s[k], out_z[k], out_a[k], out_m[k] = sigma, z, alpha, m
            k += 1
    log.debug("gibbs tau=%.3f: kept %d of %d draws", q.tau, D, gibbs.n_draws)
    return GibbsDraws(q.tau, out_f, out_l, out_s, out_z, out_a, out_m)
