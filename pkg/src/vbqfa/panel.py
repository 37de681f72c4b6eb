"""Core value types: panels, quantile levels, estimator settings and fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Panel:
    """A balanced T x n panel: rows are periods, columns are series."""

    values: np.ndarray
    time_labels: tuple[str, ...] = ()
    series_labels: tuple[str, ...] = ()
    time_name: str = "time"

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2:
            raise InputError(f"panel must be 2-D, got shape {values.shape}")
        T, n = values.shape
        if T < 2 or n < 2:
            raise InputError(f"panel needs T >= 2 and n >= 2, got T={T}, n={n}")
        if not np.all(np.isfinite(values)):
            t, i = np.argwhere(~np.isfinite(values))[0]
            raise InputError(f"non-finite value at row {t}, column {i}")
        time_labels = tuple(str(s) for s in self.time_labels) or tuple(
            str(t) for t in range(T)
        )
        series_labels = tuple(str(s) for s in self.series_labels) or tuple(
            f"x{i}" for i in range(n)
        )
        if len(time_labels) != T:
            raise InputError(f"{len(time_labels)} time labels for {T} rows")
        if len(series_labels) != n:
            raise InputError(f"{len(series_labels)} series labels for {n} columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_labels", time_labels)
        object.__setattr__(self, "series_labels", series_labels)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def with_values(self, values) -> "Panel":
        return Panel(values, self.time_labels, self.series_labels, self.time_name)


@dataclass(frozen=True)
class QuantileSpec:
    """Quantile level with the location/scale constants of its normal mixture.

    For ``u = kappa1 * z + kappa2 * sqrt(sigma * z) * v`` with ``z`` exponential
    of mean ``sigma`` and ``v`` standard normal, ``u`` is asymmetric Laplace
    with its ``tau``-quantile at zero.
    """

    tau: float
    kappa1: float
    kappa2: float

    @property
    def kappa2_sq(self) -> float:
        return self.kappa2 * self.kappa2


def make_quantile_spec(tau: float) -> QuantileSpec:
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"quantile level must lie in (0, 1), got {tau}")
    v = tau * (1.0 - tau)
    return QuantileSpec(tau, (1.0 - 2.0 * tau) / v, math.sqrt(2.0 / v))


def check_loss(u, tau: float):
    """Koenker check function ``u * (tau - 1{u <= 0})``; vectorised over ``u``."""
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"quantile level must lie in (0, 1), got {tau}")
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u <= 0))
    return float(out) if out.ndim == 0 else out


UPDATE_RULES = ("exact", "printed")


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings shared by every estimator.

    ``updates`` picks the variational update rules: ``"exact"`` is the
    mean-field coordinate ascent for the full model (monotone ELBO);
    ``"printed"`` reproduces the simplified textbook recursion that plugs in
    posterior means only (see README).

    ``intercept`` adds a per-series constant with an
    ``N(0, intercept_prior_var)`` prior. ``transform`` adds the rotation step
    after each sweep and ``accelerate`` wraps sweeps in squared
    extrapolation; both keep the ELBO nondecreasing.
    """

    n_factors: int
    quantiles: tuple[QuantileSpec, ...] = field(
        default_factory=lambda: (make_quantile_spec(0.5),)
    )
    tol: float = 1e-6
    max_iters: int = 300
    a0: float = 1e-4
    b0: float = 1e-4
    r0: float = 0.01
    s0: float = 0.01
    seed: int = 0
    updates: str = "exact"
    intercept: bool = True
    intercept_prior_var: float = 100.0
    transform: bool = True
    accelerate: bool = True
    standardize: bool = True

    def __post_init__(self):
        qs = tuple(
            q if isinstance(q, QuantileSpec) else make_quantile_spec(q)
            for q in self.quantiles
        )
        object.__setattr__(self, "quantiles", qs)
        if not isinstance(self.n_factors, (int, np.integer)) or self.n_factors < 1:
            raise ConfigError(f"n_factors must be a positive integer, got {self.n_factors}")
        if not qs:
            raise ConfigError("at least one quantile level is required")
        if not self.tol > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be positive, got {self.max_iters}")
        for name in ("a0", "b0", "r0", "s0", "intercept_prior_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"prior hyperparameter {name} must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.updates not in UPDATE_RULES:
            raise ConfigError(f"updates must be one of {UPDATE_RULES}, got {self.updates!r}")

    @property
    def taus(self) -> tuple[float, ...]:
        return tuple(q.tau for q in self.quantiles)

    def validate_for(self, panel: Panel) -> None:
        if self.n_factors >= panel.n:
            raise ConfigError(
                f"n_factors={self.n_factors} must be smaller than the number of series ({panel.n})"
            )
        if self.n_factors > panel.T:
            raise ConfigError(
                f"n_factors={self.n_factors} exceeds the number of periods ({panel.T})"
            )


def with_quantiles(config: EstimatorConfig, taus: Sequence[float]) -> EstimatorConfig:
    from dataclasses import replace

    return replace(config, quantiles=tuple(make_quantile_spec(t) for t in taus))


@dataclass(frozen=True, eq=False)
class QfaFit:
    """Converged variational posterior for one quantile level.

    Array shapes use ``T`` periods, ``n`` series and ``r`` factors. ``z_a`` and
    ``z_b`` are the ``(n, T)`` GIG(1/2) parameters of the mixture weights;
    ``sigma_shape``/``sigma_scale`` the inverse-gamma scale posteriors and
    ``alpha_shape``/``alpha_rate`` the gamma posteriors of the loading
    precisions. ``intercept_mean``/``intercept_var`` describe the per-series
    constants (all zero when intercepts are off).
    """

    tau: float
    factor_mean: np.ndarray
    factor_cov: np.ndarray
    loading_mean: np.ndarray
    loading_cov: np.ndarray
    elbo_trace: tuple[float, ...]
    converged: bool
    iters_used: int
    sigma_shape: float
    sigma_scale: np.ndarray
    alpha_shape: float
    alpha_rate: np.ndarray
    z_a: np.ndarray
    z_b: np.ndarray
    intercept_mean: np.ndarray
    intercept_var: np.ndarray

    @property
    def elbo(self) -> float:
        return self.elbo_trace[-1]

    @property
    def n_factors(self) -> int:
        return self.factor_mean.shape[1]

    @property
    def sigma_post(self) -> list[tuple[float, float]]:
        return [(self.sigma_shape, float(s)) for s in self.sigma_scale]

    @property
    def alpha_post(self) -> np.ndarray:
        """``(n, r, 2)`` array of (shape, rate) pairs."""
        shape = np.full_like(self.alpha_rate, self.alpha_shape)
        return np.stack([shape, self.alpha_rate], axis=-1)

    @property
    def z_post(self) -> np.ndarray:
        """``(n, T, 2)`` array of (a, b) pairs."""
        return np.stack([self.z_a, self.z_b], axis=-1)

    def common_component(self) -> np.ndarray:
        return self.factor_mean @ self.loading_mean.T

    def fitted_quantiles(self) -> np.ndarray:
        """Posterior-mean conditional quantiles of the (standardised) panel."""
        return self.intercept_mean + self.common_component()
