"""Asymmetric-Laplace mixture kernel.

Closed-form moments of the distributions that appear in the variational
posterior: GIG with index 1/2 for the mixture weights, inverse-gamma for the
scales and gamma for the loading precisions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln

from .errors import ConfigError
from .panel import check_loss

GIG_FLOOR = 1e-12
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GigHalf:
    """GIG(1/2, a, b): density proportional to ``z**-0.5 * exp(-(a*z + b/z)/2)``."""

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigError(f"GIG parameters must be positive, got a={self.a}, b={self.b}")


@dataclass(frozen=True)
class InvGammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ConfigError(
                f"inverse-gamma parameters must be positive, got {self.shape}, {self.scale}"
            )


def gig_moments(a, b=None):
    """Return ``(E[z], E[1/z])`` under GIG(1/2, a, b).

    Accepts a :class:`GigHalf` or array-likes ``a, b``. With the half-integer
    Bessel identities the ratio ``K_{3/2}(w)/K_{1/2}(w)`` is ``1 + 1/w``, so

        E[z]   = sqrt(b/a) * (1 + 1/sqrt(a*b))
        E[1/z] = sqrt(a/b)

    Both are exact and overflow-free for any ``sqrt(a*b)``. Inputs are floored
    at 1e-12.
    """
    if isinstance(a, GigHalf):
        a, b = a.a, a.b
    a = np.maximum(np.asarray(a, dtype=float), GIG_FLOOR)
    b = np.maximum(np.asarray(b, dtype=float), GIG_FLOOR)
    ratio = np.sqrt(b / a)
    mean_z = ratio + 1.0 / a
    mean_inv_z = 1.0 / ratio
    if mean_z.ndim == 0:
        return float(mean_z), float(mean_inv_z)
    return mean_z, mean_inv_z


def gig_log_normalizer(a, b):
    """Log of ``int z**-0.5 exp(-(a z + b/z)/2) dz`` = ``0.5 log(2 pi / a) - sqrt(a b)``."""
    a = np.maximum(np.asarray(a, dtype=float), GIG_FLOOR)
    b = np.maximum(np.asarray(b, dtype=float), GIG_FLOOR)
    return 0.5 * (LOG_2PI - np.log(a)) - np.sqrt(a * b)


def inv_gamma_mean_inverse(p: InvGammaParams) -> float:
    return p.shape / p.scale


def inv_gamma_mean_log(shape, scale):
    return np.log(scale) - digamma(shape)


def inv_gamma_entropy(shape, scale):
    return shape + np.log(scale) + gammaln(shape) - (1.0 + shape) * digamma(shape)


def inv_gamma_expected_logpdf(shape0, scale0, mean_log, mean_inv):
    """``E[log IG(x; shape0, scale0)]`` given ``E[log x]`` and ``E[1/x]``."""
    return (
        shape0 * math.log(scale0)
        - gammaln(shape0)
        - (shape0 + 1.0) * mean_log
        - scale0 * mean_inv
    )


def gamma_mean_log(shape, rate):
    return digamma(shape) - np.log(rate)


def gamma_entropy(shape, rate):
    return shape - np.log(rate) + gammaln(shape) + (1.0 - shape) * digamma(shape)


def gamma_expected_logpdf(shape0, rate0, mean_log, mean):
    return (
        shape0 * math.log(rate0)
        - gammaln(shape0)
        + (shape0 - 1.0) * mean_log
        - rate0 * mean
    )


def al_log_density(u, tau: float, sigma: float):
    """Asymmetric-Laplace log density ``log(tau(1-tau)/sigma) - rho_tau(u)/sigma``."""
    if not sigma > 0:
        raise ConfigError(f"scale must be positive, got {sigma}")
    return math.log(tau * (1.0 - tau) / sigma) - check_loss(u, tau) / sigma
