import numpy as np
import pytest

from vbqfa.engine import fit
from vbqfa.errors import ConfigError
from vbqfa.gibbs import GibbsConfig, gibbs_fit, sample_gig_half
from vbqfa.mixture import gig_moments
from vbqfa.panel import EstimatorConfig, make_quantile_spec
from vbqfa.simulate import DgpConfig, generate_panel, trace_r2


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_draws=100, burn_in=100),
        dict(burn_in=-1),
        dict(thin=0),
        dict(seed=-3),
        dict(fixed={"loadings": 1.0}),
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        GibbsConfig(**kwargs)


def test_kept_draw_count():
    assert GibbsConfig(n_draws=5000, burn_in=1000, thin=2).n_kept == 2000
    assert GibbsConfig(n_draws=11, burn_in=0, thin=5).n_kept == 3


@pytest.mark.parametrize("a,b", [(4.0, 1.0), (0.3, 2.5), (10.0, 1e-3)])
def test_gig_sampler_matches_closed_form(a, b):
    rng = np.random.default_rng(0)
    z = sample_gig_half(np.full(400_000, a), np.full(400_000, b), rng)
    Ez, Einv = gig_moments(a, b)
    se = z.std() / np.sqrt(z.size)
    assert abs(z.mean() - Ez) < 4 * se
    se_inv = (1 / z).std() / np.sqrt(z.size)
    assert abs((1 / z).mean() - Einv) < 4 * se_inv


def test_gig_sampler_known_value():
    z = sample_gig_half(np.full(200_000, 4.0), np.full(200_000, 1.0), np.random.default_rng(1))
    assert z.mean() == pytest.approx(0.75, rel=0.01)


def test_loadings_conditional_matches_ridge_oracle():
    """With every other block clamped, the loadings draws are Gaussian with
    a generalised-ridge mean and covariance."""
    rng = np.random.default_rng(4)
    T, n, r = 40, 3, 2
    x = rng.normal(size=(T, n))
    F = rng.normal(size=(T, r))
    z = rng.gamma(2.0, 0.5, size=(n, T))
    sigma = np.array([0.5, 1.0, 2.0])
    alpha = np.array([[1.0, 2.0], [0.5, 0.1], [3.0, 1.0]])
    tau = 0.3
    q = make_quantile_spec(tau)
    cfg = EstimatorConfig(n_factors=r, quantiles=(tau,), standardize=False, intercept=False)
    g = GibbsConfig(
        n_draws=20_000, burn_in=0, thin=1, seed=5,
        fixed={"z": z, "sigma": sigma, "alpha": alpha, "factors": F},
    )
    draws = gibbs_fit(x, cfg, tau, g)
    for i in range(n):
        w = 1.0 / (q.kappa2_sq * sigma[i] * z[i])
        P = (F * w[:, None]).T @ F + np.diag(alpha[i])
        cov = np.linalg.inv(P)
        mean = cov @ (F.T @ (w * (x[:, i] - q.kappa1 * z[i])))
        got = draws.loading_draws[:, i, :]
        se = np.sqrt(np.diag(cov) / got.shape[0])
        assert np.all(np.abs(got.mean(axis=0) - mean) < 4 * se)
        np.testing.assert_allclose(np.cov(got.T), cov, rtol=0.05, atol=0.02 * cov.max())


def test_fixed_blocks_are_not_sampled():
    x = np.random.default_rng(0).normal(size=(20, 4))
    cfg = EstimatorConfig(n_factors=1, quantiles=(0.5,), standardize=False)
    g = GibbsConfig(n_draws=30, burn_in=10, thin=1, fixed={"sigma": 2.0, "intercept": 0.5})
    d = gibbs_fit(x, cfg, 0.5, g)
    np.testing.assert_array_equal(d.sigma_draws, 2.0)
    np.testing.assert_array_equal(d.intercept_draws, 0.5)
    assert d.n_kept == 20


def test_intercepts_stay_zero_when_disabled():
    x = np.random.default_rng(0).normal(size=(20, 4))
    cfg = EstimatorConfig(n_factors=1, quantiles=(0.5,), intercept=False)
    d = gibbs_fit(x, cfg, 0.5, GibbsConfig(n_draws=20, burn_in=5))
    np.testing.assert_array_equal(d.intercept_draws, 0.0)


def test_same_seed_same_chain():
    x = np.random.default_rng(0).normal(size=(15, 5))
    cfg = EstimatorConfig(n_factors=2, quantiles=(0.5,))
    g = GibbsConfig(n_draws=40, burn_in=10, seed=9)
    a, b = gibbs_fit(x, cfg, 0.5, g), gibbs_fit(x, cfg, 0.5, g)
    np.testing.assert_array_equal(a.factor_draws, b.factor_draws)


def test_posterior_mean_agrees_with_variational_fit():
    panel, true_f = generate_panel(DgpConfig(T=60, n=40, seed=21, snr_target=0.8))
    cfg = EstimatorConfig(n_factors=3)
    draws = gibbs_fit(panel, cfg, 0.5, GibbsConfig(n_draws=1500, burn_in=500, seed=1))
    vb = fit(panel, cfg, 0.5)
    assert trace_r2(vb.factor_mean, draws.factor_mean) > 0.95
    assert abs(trace_r2(vb.factor_mean, true_f) - trace_r2(draws.factor_mean, true_f)) < 0.05
