"""Coordinate-ascent variational Bayes for the quantile factor model.

Model for one quantile level (``x`` is ``T x n``, ``i`` indexes series and
``t`` periods)::

    x_it = m_i + lambda_i' f_t + k1 z_it + k2 sqrt(sigma_i z_it) v_it
    z_it ~ Exp(mean sigma_i),  sigma_i ~ IG(r0, s0),  f_t ~ N(0, I)
    lambda_ij ~ N(0, 1/alpha_ij),  alpha_ij ~ Gamma(a0, b0),  m_i ~ N(0, v0)

The intercept ``m_i`` carries the series-specific quantile offset and can
be switched off (then ``m_i = 0``). The mean-field posterior factorises
over lambda_i, alpha_ij, m_i, sigma_i, z_it and f_t. Each update below sets one block to its optimal form given the
others, so a full sweep never decreases the ELBO.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError, QfaError
from .mixture import (
    GIG_FLOOR,
    LOG_2PI,
    gamma_entropy,
    gamma_expected_logpdf,
    gamma_mean_log,
    gig_log_normalizer,
    gig_moments,
    inv_gamma_entropy,
    inv_gamma_expected_logpdf,
    inv_gamma_mean_log,
)
from .panel import EstimatorConfig, Panel, QfaFit, QuantileSpec, make_quantile_spec
from .pca import fix_signs, pca_factors, standardize

log = logging.getLogger(__name__)

INIT_VARIANCE = 10.0
ELBO_START = -1000.0


@dataclass(frozen=True, eq=False)
class VariationalState:
    mu_lambda: np.ndarray  # (n, r)
    Sigma_lambda: np.ndarray  # (n, r, r)
    mu_f: np.ndarray  # (T, r)
    Sigma_f: np.ndarray  # (T, r, r)
    alpha_shape: float
    alpha_rate: np.ndarray  # (n, r)
    sigma_shape: float
    sigma_scale: np.ndarray  # (n,)
    z_a: np.ndarray  # (n, T)
    z_b: np.ndarray  # (n, T)
    intercept_mean: np.ndarray  # (n,)
    intercept_var: np.ndarray  # (n,), zero when intercepts are off
    elbo: float = float("nan")

    @property
    def n_factors(self) -> int:
        return self.mu_f.shape[1]

    # Expectations under q.
    def mean_inv_sigma(self) -> np.ndarray:
        return self.sigma_shape / self.sigma_scale

    def mean_alpha(self) -> np.ndarray:
        return self.alpha_shape / self.alpha_rate

    def z_moments(self) -> tuple[np.ndarray, np.ndarray]:
        return gig_moments(self.z_a, self.z_b)


def _values(panel) -> np.ndarray:
    return panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)


def _as_spec(tau) -> QuantileSpec:
    return tau if isinstance(tau, QuantileSpec) else make_quantile_spec(tau)


def init_state(panel, config: EstimatorConfig, tau) -> VariationalState:
    """Starting point: PCA factor means, zero loading means, ``10 I`` covariances.

    Loading precisions and scales start at their prior means, the mixture
    weights at GIG(1/2, 1, 1) and intercepts at ``N(0, 10)``.
    """
    x = _values(panel)
    if isinstance(panel, Panel):
        config.validate_for(panel)
    T, n = x.shape
    r = config.n_factors
    eye = np.eye(r)
    return VariationalState(
        mu_lambda=np.zeros((n, r)),
        Sigma_lambda=np.broadcast_to(INIT_VARIANCE * eye, (n, r, r)).copy(),
        mu_f=pca_factors(x, r).factors,
        Sigma_f=np.broadcast_to(INIT_VARIANCE * eye, (T, r, r)).copy(),
        alpha_shape=config.a0,
        alpha_rate=np.full((n, r), config.b0),
        sigma_shape=config.r0,
        sigma_scale=np.full(n, config.s0),
        z_a=np.ones((n, T)),
        z_b=np.ones((n, T)),
        intercept_mean=np.zeros(n),
        intercept_var=np.full(n, INIT_VARIANCE if config.intercept else 0.0),
    )


def _gaussian_from_precision(P, rhs, block):
    """Batched ``Sigma = P^-1`` and ``mu = Sigma rhs`` via Cholesky."""
    if not np.all(np.isfinite(P)):
        raise NumericalError("non-finite precision matrix", block=block)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("precision matrix is not positive definite", block=block) from exc
    eye = np.broadcast_to(np.eye(P.shape[-1]), P.shape)
    L_inv = np.linalg.solve(L, eye)
    Sigma = np.swapaxes(L_inv, -1, -2) @ L_inv
    mu = (Sigma @ rhs[..., None])[..., 0]
    return mu, Sigma


def _outer(mu):
    return mu[:, :, None] * mu[:, None, :]


def _residual(x, state):
    """``(n, T)`` residuals at the posterior means."""
    return x.T - state.intercept_mean[:, None] - state.mu_lambda @ state.mu_f.T


def expected_sq_residual(x, state, updates="exact"):
    """``E[(x_it - m_i - lambda_i' f_t)^2]`` under q, shape ``(n, T)``.

    The printed recursion drops the factor uncertainty terms.
    """
    res = _residual(x, state)
    mu_f, mu_l = state.mu_f, state.mu_lambda
    Sl, Sf = state.Sigma_lambda, state.Sigma_f
    out = res * res + np.einsum("tj,ijk,tk->it", mu_f, Sl, mu_f)
    out += state.intercept_var[:, None]
    if updates == "exact":
        out += np.einsum("ij,tjk,ik->it", mu_l, Sf, mu_l)
        n, T = res.shape
        out += Sl.reshape(n, -1) @ Sf.reshape(T, -1).T
    return out


def update_loadings(state, panel, tau, updates="exact") -> VariationalState:
    q = _as_spec(tau)
    x = _values(panel)
    T, r = state.mu_f.shape
    w = state.mean_inv_sigma()
    _, Einvz = state.z_moments()
    coef = w[:, None] * Einvz / q.kappa2_sq
    Eff = _outer(state.mu_f)
    if updates == "exact":
        Eff = Eff + state.Sigma_f
    P = (coef @ Eff.reshape(T, r * r)).reshape(-1, r, r)
    P = P + state.mean_alpha()[:, :, None] * np.eye(r)
    rhs = (coef * (x.T - state.intercept_mean[:, None])) @ state.mu_f
    rhs -= (q.kappa1 / q.kappa2_sq) * w[:, None] * state.mu_f.sum(axis=0)
    mu, Sigma = _gaussian_from_precision(P, rhs, "loadings")
    return replace(state, mu_lambda=mu, Sigma_lambda=Sigma)


def update_alpha(state, config: EstimatorConfig) -> VariationalState:
    second = state.mu_lambda**2 + np.diagonal(state.Sigma_lambda, axis1=1, axis2=2)
    return replace(
        state,
        alpha_shape=config.a0 + 0.5,
        alpha_rate=config.b0 + 0.5 * second,
    )


def update_intercept(state, panel, tau, config: EstimatorConfig) -> VariationalState:
    """Gaussian update of the series intercepts; a no-op when they are off."""
    if not config.intercept:
        return state
    q = _as_spec(tau)
    x = _values(panel)
    T = x.shape[0]
    w = state.mean_inv_sigma()
    _, Einvz = state.z_moments()
    coef = w[:, None] * Einvz / q.kappa2_sq
    prec = coef.sum(axis=1) + 1.0 / config.intercept_prior_var
    partial = x.T - state.mu_lambda @ state.mu_f.T
    rhs = (coef * partial).sum(axis=1) - (q.kappa1 / q.kappa2_sq) * w * T
    if not np.all(np.isfinite(prec)) or np.any(prec <= 0):
        raise NumericalError("non-positive intercept precision", block="intercept")
    return replace(state, intercept_mean=rhs / prec, intercept_var=1.0 / prec)


def update_z(state, panel, tau, updates="exact") -> VariationalState:
    q = _as_spec(tau)
    x = _values(panel)
    w = state.mean_inv_sigma()
    n, T = state.z_a.shape
    a = np.broadcast_to((w * (2.0 + q.kappa1**2 / q.kappa2_sq))[:, None], (n, T)).copy()
    b = w[:, None] * expected_sq_residual(x, state, updates) / q.kappa2_sq
    return replace(state, z_a=a, z_b=np.maximum(b, GIG_FLOOR))


def update_sigma(state, panel, tau, config: EstimatorConfig, updates="exact") -> VariationalState:
    q = _as_spec(tau)
    x = _values(panel)
    T = x.shape[0]
    k2 = q.kappa2_sq
    Ez, Einvz = state.z_moments()
    res = _residual(x, state)
    ee2 = expected_sq_residual(x, state, updates)
    terms = Einvz * ee2 / (2.0 * k2) - q.kappa1 * res / k2 + (1.0 + q.kappa1**2 / (2.0 * k2)) * Ez
    scale = config.s0 + terms.sum(axis=1)
    if not np.all(np.isfinite(scale)) or np.any(scale <= 0):
        raise NumericalError("non-positive scale posterior", block="sigma")
    shape = config.r0 + (1.5 * T if updates == "exact" else 3.0 * T)
    return replace(state, sigma_shape=shape, sigma_scale=scale)


def update_factors(state, panel, tau, updates="exact") -> VariationalState:
    q = _as_spec(tau)
    x = _values(panel)
    n, r = state.mu_lambda.shape
    w = state.mean_inv_sigma()
    _, Einvz = state.z_moments()
    coef = w[:, None] * Einvz / q.kappa2_sq
    Ell = _outer(state.mu_lambda)
    if updates == "exact":
        Ell = Ell + state.Sigma_lambda
    P = (coef.T @ Ell.reshape(n, r * r)).reshape(-1, r, r) + np.eye(r)
    rhs = (coef * (x.T - state.intercept_mean[:, None])).T @ state.mu_lambda
    rhs -= (q.kappa1 / q.kappa2_sq) * (w @ state.mu_lambda)
    mu, Sigma = _gaussian_from_precision(P, rhs, "factors")
    return replace(state, mu_f=mu, Sigma_f=Sigma)


def _transform_objective(v, r, n, T, Sff, Sll, a0, b0):
    """Negated ELBO change under ``f -> R^-1 f``, ``lambda -> R' lambda``, with
    the loading precisions re-optimised, and its gradient in ``R``."""
    R = v.reshape(r, r)
    sign, logdet = np.linalg.slogdet(R)
    if sign == 0:
        return np.inf, np.zeros_like(v)
    A = np.linalg.inv(R)
    ASA = A @ Sff @ A.T
    SR = Sll @ R  # (n, r, r): column k is S_i r_k
    m = np.einsum("jk,ijk->ik", R, SR)
    b = b0 + 0.5 * m
    c = a0 + 0.5
    J = (n - T) * logdet - 0.5 * np.trace(ASA) - c * np.log(b).sum()
    G = (n - T) * A.T + A.T @ A @ Sff @ A.T
    G -= c * np.einsum("ijk,ik->jk", SR, 1.0 / b)
    return -J, -G.ravel()


def update_transform(state, config: EstimatorConfig) -> VariationalState:
    """Reparameterise factors and loadings by the ELBO-maximising linear map.

    The likelihood only sees ``lambda_i' f_t``, so moving ``f`` to ``R^-1 f``
    and ``lambda`` to ``R' lambda`` changes just the factor prior, the loading
    prior and the two Gaussian entropies. Optimising over ``R`` removes the
    slow scale/rotation drift of plain coordinate ascent. Loading precisions
    are refreshed afterwards; the ELBO never decreases.
    """
    n, r = state.mu_lambda.shape
    T = state.mu_f.shape[0]
    Sff = state.mu_f.T @ state.mu_f + state.Sigma_f.sum(axis=0)
    Sll = _outer(state.mu_lambda) + state.Sigma_lambda
    args = (r, n, T, Sff, Sll, config.a0, config.b0)
    v0 = np.eye(r).ravel()
    res = minimize(_transform_objective, v0, args=args, jac=True, method="BFGS")
    if np.all(np.isfinite(res.x)) and res.fun < _transform_objective(v0, *args)[0]:
        R = res.x.reshape(r, r)
        A = np.linalg.inv(R)
        state = replace(
            state,
            mu_lambda=state.mu_lambda @ R,
            Sigma_lambda=R.T @ state.Sigma_lambda @ R,
            mu_f=state.mu_f @ A.T,
            Sigma_f=A @ state.Sigma_f @ A.T,
        )
    return update_alpha(state, config)


def update_translation(state, tau, config: EstimatorConfig) -> VariationalState:
    """Shift factor means by ``-c`` and intercept means by ``+lambda_i' c``.

    The fitted means ``m_i + lambda_i' f_t`` are unchanged. With the weights
    held fixed the ELBO is a concave quadratic in ``c``; this applies its
    maximiser, which lets the intercepts and the factor means trade level
    in one step instead of many small coordinate moves.
    """
    if not config.intercept:
        return state
    q = _as_spec(tau)
    n, r = state.mu_lambda.shape
    T = state.mu_f.shape[0]
    _, Einvz = state.z_moments()
    coef = state.mean_inv_sigma()[:, None] * Einvz / q.kappa2_sq  # (n, T)
    Sl = state.Sigma_lambda.reshape(n, r * r)
    ml = state.mu_lambda
    v0 = config.intercept_prior_var
    H = (coef.sum(axis=1) @ Sl).reshape(r, r) + T * np.eye(r) + ml.T @ ml / v0
    weighted = coef @ state.mu_f  # (n, r): sum_t coef_it f_t
    g = np.einsum("ijk,ik->j", state.Sigma_lambda, weighted)
    g += state.mu_f.sum(axis=0) - ml.T @ state.intercept_mean / v0
    c = np.linalg.solve(H, g)
    return replace(
        state,
        mu_f=state.mu_f - c,
        intercept_mean=state.intercept_mean + ml @ c,
    )


def _logdet(S, block):
    sign, ld = np.linalg.slogdet(S)
    if np.any(sign <= 0):
        raise NumericalError("covariance is not positive definite", block=block)
    return ld


def mixture_loglik_terms(x, state, tau):
    """Per-(i, t) contribution of the likelihood, the exponential prior on the
    mixture weight and the weight's entropy, shape ``(n, T)``.

    With the weight at its optimal GIG form and point masses elsewhere this
    equals the asymmetric-Laplace log density of the residual.
    """
    q = _as_spec(tau)
    k2 = q.kappa2_sq
    w = state.mean_inv_sigma()[:, None]
    elog_sigma = inv_gamma_mean_log(state.sigma_shape, state.sigma_scale)[:, None]
    Ez, Einvz = state.z_moments()
    a = np.maximum(state.z_a, GIG_FLOOR)
    b = np.maximum(state.z_b, GIG_FLOOR)
    A = w * (2.0 + q.kappa1**2 / k2)
    B = w * expected_sq_residual(x, state, "exact") / k2
    return (
        -0.5 * (LOG_2PI + math.log(k2))
        - 1.5 * elog_sigma
        + (q.kappa1 / k2) * w * _residual(x, state)
        - 0.5 * (A - a) * Ez
        - 0.5 * (B - b) * Einvz
        + gig_log_normalizer(a, b)
    )


def compute_elbo(state, panel, tau, config: EstimatorConfig) -> float:
    """Evidence lower bound of ``state`` including all additive constants."""
    x = _values(panel)
    T, n = x.shape
    r = state.n_factors

    total = mixture_loglik_terms(x, state, tau).sum()

    elog_sigma = inv_gamma_mean_log(state.sigma_shape, state.sigma_scale)
    total += np.sum(
        inv_gamma_expected_logpdf(config.r0, config.s0, elog_sigma, state.mean_inv_sigma())
        + inv_gamma_entropy(state.sigma_shape, state.sigma_scale)
    )

    elog_alpha = gamma_mean_log(state.alpha_shape, state.alpha_rate)
    e_alpha = state.mean_alpha()
    e_l2 = state.mu_lambda**2 + np.diagonal(state.Sigma_lambda, axis1=1, axis2=2)
    total += np.sum(-0.5 * LOG_2PI + 0.5 * elog_alpha - 0.5 * e_alpha * e_l2)
    total += np.sum(
        gamma_expected_logpdf(config.a0, config.b0, elog_alpha, e_alpha)
        + gamma_entropy(state.alpha_shape, state.alpha_rate)
    )

    gauss_ent = 0.5 * r * (1.0 + LOG_2PI)
    total += n * gauss_ent + 0.5 * _logdet(state.Sigma_lambda, "loadings").sum()

    tr_f = np.trace(state.Sigma_f, axis1=1, axis2=2)
    total += np.sum(-0.5 * r * LOG_2PI - 0.5 * (np.sum(state.mu_f**2, axis=1) + tr_f))
    total += T * gauss_ent + 0.5 * _logdet(state.Sigma_f, "factors").sum()

    if config.intercept:
        v0 = config.intercept_prior_var
        m, v = state.intercept_mean, state.intercept_var
        total += np.sum(-0.5 * math.log(2.0 * math.pi * v0) - 0.5 * (m * m + v) / v0)
        total += np.sum(0.5 * (1.0 + LOG_2PI + np.log(v)))
    return float(total)


def sweep(state, x, q, config) -> VariationalState:
    """One pass: loadings, precisions, intercepts, weights, scales, factors,
    then the optional reparameterisation (translation and rotation)."""
    u = config.updates
    state = update_loadings(state, x, q, u)
    state = update_alpha(state, config)
    state = update_intercept(state, x, q, config)
    state = update_z(state, x, q, u)
    state = update_sigma(state, x, q, config, u)
    state = update_factors(state, x, q, u)
    if config.transform:
        state = update_translation(state, q, config)
        state = update_transform(state, config)
    return replace(state, elbo=compute_elbo(state, x, q, config))


def orient(state: VariationalState) -> VariationalState:
    """Flip factor signs so each loading column starts nonnegative."""
    d = fix_signs(state.mu_lambda)
    D = d[:, None] * d[None, :]
    return replace(
        state,
        mu_lambda=state.mu_lambda * d,
        Sigma_lambda=state.Sigma_lambda * D,
        mu_f=state.mu_f * d,
        Sigma_f=state.Sigma_f * D,
        alpha_rate=state.alpha_rate.copy(),
    )


def _tail_warning(tau):
    if tau <= 0.01 or tau >= 0.99:
        warnings.warn(
            f"quantile level {tau} leaves few effective observations in the tail",
            stacklevel=3,
        )


# Blocks that a sweep reads from the previous state; positive ones are
# extrapolated on the log scale.
_EXTRAPOLATED = (
    "mu_f", "Sigma_f", "sigma_scale", "z_a", "z_b", "alpha_rate", "intercept_mean",
)
_LOG_SCALE = frozenset(("sigma_scale", "z_a", "z_b", "alpha_rate"))


def _to_vec(state):
    return {
        k: np.log(getattr(state, k)) if k in _LOG_SCALE else getattr(state, k)
        for k in _EXTRAPOLATED
    }


def _from_vec(state, vec):
    kw = {k: np.exp(v) if k in _LOG_SCALE else v for k, v in vec.items()}
    S = kw["Sigma_f"]
    kw["Sigma_f"] = 0.5 * (S + np.swapaxes(S, -1, -2))
    try:
        np.linalg.cholesky(kw["Sigma_f"])
    except np.linalg.LinAlgError:
        return None
    return replace(state, **kw)


def squarem_step(state, x, q, config):
    """One squared-extrapolation step around the sweep map.

    Two sweeps give ``r = s1 - s0`` and ``v = s2 - 2 s1 + s0``; the proposal
    ``s0 - 2a r + a^2 v`` (step ``a = -|r|/|v|``) is followed by one
    stabilising sweep and accepted only if its ELBO is at least that of
    ``s2``. Otherwise the step is halved towards ``a = -1``, which is ``s2``
    itself, so the returned ELBO never falls below two plain sweeps.
    Returns ``(state, sweeps_used)``.
    """
    s1 = sweep(state, x, q, config)
    s2 = sweep(s1, x, q, config)
    used = 2
    v0, v1, v2 = _to_vec(state), _to_vec(s1), _to_vec(s2)
    r = {k: v1[k] - v0[k] for k in _EXTRAPOLATED}
    v = {k: v2[k] - 2.0 * v1[k] + v0[k] for k in _EXTRAPOLATED}
    r_norm = math.sqrt(sum(float(np.sum(r[k] ** 2)) for k in _EXTRAPOLATED))
    v_norm = math.sqrt(sum(float(np.sum(v[k] ** 2)) for k in _EXTRAPOLATED))
    a = min(-r_norm / v_norm, -1.0) if v_norm > 0 else -1.0
    while a < -1.0:
        cand = _from_vec(state, {k: v0[k] - 2.0 * a * r[k] + a * a * v[k] for k in _EXTRAPOLATED})
        if cand is not None:
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    cand = sweep(cand, x, q, config)
                used += 1
                if math.isfinite(cand.elbo) and cand.elbo >= s2.elbo:
                    return cand, used
            except NumericalError:
                used += 1
        a = 0.5 * (a - 1.0) if a < -1.5 else -1.0
    return s2, used


def fit(panel, config: EstimatorConfig, tau=None) -> QfaFit:
    """Run coordinate ascent until ``|ELBO_k - ELBO_{k-1}| <= tol`` or ``max_iters``.

    ``tau`` defaults to the first configured quantile level. The panel is
    standardised first unless ``config.standardize`` is false.

    ``elbo_trace`` holds the ELBO of every accepted iterate; with
    ``config.accelerate`` one iterate is an extrapolation step built from
    several sweeps. ``iters_used`` counts sweeps, and ``max_iters`` caps it.
    """
    q = _as_spec(config.quantiles[0] if tau is None else tau)
    _tail_warning(q.tau)
    if not isinstance(panel, Panel):
        panel = Panel(panel)
    config.validate_for(panel)
    if config.standardize:
        panel, _, _ = standardize(panel)
    x = panel.values

    state = init_state(x, config, q)
    trace: list[float] = []
    prev = ELBO_START
    converged = False
    sweeps = 0
    while sweeps < config.max_iters:
        try:
            # the first sweep moves the shape constants off their prior values
            if config.accelerate and sweeps > 0 and config.max_iters - sweeps >= 3:
                state, used = squarem_step(state, x, q, config)
            else:
                state, used = sweep(state, x, q, config), 1
        except NumericalError as exc:
            raise NumericalError(str(exc), iteration=sweeps + 1) from exc
        sweeps += used
        if not math.isfinite(state.elbo):
            raise NumericalError("non-finite ELBO", iteration=sweeps, block="elbo")
        trace.append(state.elbo)
        if abs(state.elbo - prev) <= config.tol:
            converged = True
            break
        prev = state.elbo
    log.debug("tau=%.3f r=%d: %d sweeps, ELBO %.6f", q.tau, config.n_factors, sweeps, state.elbo)
    return fit_from_state(orient(state), q.tau, trace, converged, sweeps)


def fit_from_state(state, tau, trace, converged, sweeps=None) -> QfaFit:
    return QfaFit(
        tau=float(tau),
        factor_mean=state.mu_f,
        factor_cov=state.Sigma_f,
        loading_mean=state.mu_lambda,
        loading_cov=state.Sigma_lambda,
        elbo_trace=tuple(float(v) for v in trace),
        converged=converged,
        iters_used=len(trace) if sweeps is None else int(sweeps),
        sigma_shape=float(state.sigma_shape),
        sigma_scale=state.sigma_scale,
        alpha_shape=float(state.alpha_shape),
        alpha_rate=state.alpha_rate,
        z_a=state.z_a,
        z_b=state.z_b,
        intercept_mean=state.intercept_mean,
        intercept_var=state.intercept_var,
    )


def state_from_fit(result: QfaFit) -> VariationalState:
    return VariationalState(
        mu_lambda=result.loading_mean,
        Sigma_lambda=result.loading_cov,
        mu_f=result.factor_mean,
        Sigma_f=result.factor_cov,
        alpha_shape=result.alpha_shape,
        alpha_rate=result.alpha_rate,
        sigma_shape=result.sigma_shape,
        sigma_scale=result.sigma_scale,
        z_a=result.z_a,
        z_b=result.z_b,
        intercept_mean=result.intercept_mean,
        intercept_var=result.intercept_var,
        elbo=result.elbo,
    )


class QuantileFits(dict):
    """Mapping tau -> QfaFit; levels that failed are listed in ``failures``."""

    def __init__(self, *args, failures=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.failures: dict[float, QfaError] = dict(failures or {})


def _fit_one(args):
    panel, config, q = args
    try:
        return fit(panel, config, q)
    except QfaError as exc:
        return exc


def fit_all_quantiles(panel, config: EstimatorConfig, n_jobs: int = 1) -> QuantileFits:
    """Independent fits for every configured quantile level.

    A failure at one level is recorded in ``.failures`` and does not stop the
    others.
    """
    jobs = [(panel, config, q) for q in config.quantiles]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_fit_one, jobs))
    else:
        outcomes = [_fit_one(j) for j in jobs]
    fits, failures = {}, {}
    for q, out in zip(config.quantiles, outcomes):
        if isinstance(out, QfaError):
            failures[q.tau] = out
        else:
            fits[q.tau] = out
    return QuantileFits(fits, failures=failures)
