import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from vbqfa.errors import ConfigError
from vbqfa.mixture import (
    GigHalf,
    InvGammaParams,
    al_log_density,
    gamma_entropy,
    gamma_expected_logpdf,
    gamma_mean_log,
    gig_log_normalizer,
    gig_moments,
    inv_gamma_entropy,
    inv_gamma_expected_logpdf,
    inv_gamma_mean_inverse,
    inv_gamma_mean_log,
)
from vbqfa.panel import make_quantile_spec

pos = st.floats(min_value=1e-2, max_value=50.0)


def _gig_kernel(z, a, b):
    return z**-0.5 * np.exp(-(a * z + b / z) / 2)


@pytest.mark.parametrize("a,b", [(1.0, 1.0), (4.0, 1.0), (0.3, 7.0), (20.0, 0.05)])
def test_gig_moments_by_quadrature(a, b):
    norm = integrate.quad(_gig_kernel, 0, np.inf, args=(a, b))[0]
    m1 = integrate.quad(lambda z: z * _gig_kernel(z, a, b), 0, np.inf)[0] / norm
    minv = integrate.quad(lambda z: _gig_kernel(z, a, b) / z, 0, np.inf)[0] / norm
    Ez, Einv = gig_moments(a, b)
    assert Ez == pytest.approx(m1, rel=1e-7)
    assert Einv == pytest.approx(minv, rel=1e-7)
    assert gig_log_normalizer(a, b) == pytest.approx(math.log(norm), rel=1e-8)


def test_gig_mean_at_four_one():
    assert gig_moments(GigHalf(4.0, 1.0))[0] == pytest.approx(0.75)


@given(pos, pos)
def test_gig_moment_inequalities(a, b):
    Ez, Einv = gig_moments(a, b)
    assert Ez > 0 and Einv > 0
    assert Ez * Einv >= 1 - 1e-12  # Jensen


def test_gig_moments_are_vectorised_and_floored():
    Ez, Einv = gig_moments(np.array([1.0, 2.0]), np.array([0.0, 1.0]))
    assert Ez.shape == (2,)
    assert np.all(np.isfinite(Ez)) and np.all(np.isfinite(Einv))


def test_gig_rejects_nonpositive():
    with pytest.raises(ConfigError):
        GigHalf(0.0, 1.0)
    with pytest.raises(ConfigError):
        InvGammaParams(1.0, -1.0)


@pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_al_density_integrates_to_one(tau, sigma):
    f = lambda u: math.exp(al_log_density(u, tau, sigma))  # noqa: E731
    total = integrate.quad(f, -np.inf, 0)[0] + integrate.quad(f, 0, np.inf)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("tau", [0.1, 0.5, 0.9])
def test_al_quantile_sits_at_zero(tau):
    f = lambda u: math.exp(al_log_density(u, tau, 1.3))  # noqa: E731
    assert integrate.quad(f, -np.inf, 0)[0] == pytest.approx(tau, abs=1e-8)


@pytest.mark.parametrize("tau", [0.2, 0.5, 0.75])
@pytest.mark.parametrize("u", [-2.0, -0.3, 0.4, 1.7])
def test_normal_mixture_reproduces_al(tau, u):
    q = make_quantile_spec(tau)
    sigma = 0.8

    def integrand(z):
        mean, var = q.kappa1 * z, q.kappa2_sq * sigma * z
        return stats.expon.pdf(z, scale=sigma) * stats.norm.pdf(u, mean, math.sqrt(var))

    marginal = integrate.quad(integrand, 0, np.inf, limit=200)[0]
    assert marginal == pytest.approx(math.exp(al_log_density(u, tau, sigma)), rel=1e-6)


@pytest.mark.parametrize("shape,scale", [(2.0, 1.0), (5.5, 0.3), (0.7, 4.0)])
def test_inverse_gamma_identities(shape, scale):
    d = stats.invgamma(shape, scale=scale)
    assert inv_gamma_entropy(shape, scale) == pytest.approx(d.entropy(), rel=1e-10)
    assert inv_gamma_mean_inverse(InvGammaParams(shape, scale)) == pytest.approx(shape / scale)
    mean_log = d.expect(np.log)
    assert inv_gamma_mean_log(shape, scale) == pytest.approx(mean_log, rel=1e-6)
    ref = d.expect(lambda x: stats.invgamma.logpdf(x, 1.5, scale=0.2))
    got = inv_gamma_expected_logpdf(1.5, 0.2, mean_log, shape / scale)
    assert got == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("shape,rate", [(2.0, 1.0), (0.6, 0.05), (7.0, 0.2)])
def test_gamma_identities(shape, rate):
    d = stats.gamma(shape, scale=1 / rate)
    assert gamma_entropy(shape, rate) == pytest.approx(d.entropy(), rel=1e-10)
    assert gamma_mean_log(shape, rate) == pytest.approx(d.expect(np.log), rel=1e-6, abs=1e-8)
    ref = d.expect(lambda x: stats.gamma.logpdf(x, 1e-4, scale=1e4))
    got = gamma_expected_logpdf(1e-4, 1e-4, gamma_mean_log(shape, rate), shape / rate)
    assert got == pytest.approx(ref, rel=1e-6)
