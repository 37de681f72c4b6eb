import numpy as np
import pytest
from hypothesis import given, strategies as st

from vbqfa.errors import ConfigError, InputError, NumericalError
from vbqfa.panel import Panel
from vbqfa.pca import fix_signs, pca_factors, standardize


def test_standardize_moments(rng):
    p = Panel(rng.normal(3.0, 2.0, size=(40, 6)))
    z, means, sds = standardize(p)
    np.testing.assert_allclose(z.values.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(z.values.std(axis=0, ddof=1), 1, atol=1e-12)
    np.testing.assert_allclose(z.values * sds + means, p.values, atol=1e-12)


def test_standardize_names_constant_series():
    a = np.random.default_rng(1).normal(size=(5, 3))
    a[:, 1] = 5.0
    p = Panel(a, series_labels=("gdp", "flat", "cpi"))
    with pytest.raises(InputError, match="flat"):
        standardize(p)


def test_noiseless_rank_r_is_recovered(rng):
    F = rng.normal(size=(60, 2))
    L = rng.normal(size=(15, 2))
    fit = pca_factors(F @ L.T, 2)
    np.testing.assert_allclose(fit.factors @ fit.loadings.T, F @ L.T, atol=1e-10)
    # same column space
    P = F @ np.linalg.solve(F.T @ F, F.T)
    np.testing.assert_allclose(P @ fit.factors, fit.factors, atol=1e-10)


def test_normalisation_and_ordering(rng):
    x = rng.normal(size=(50, 8))
    fit = pca_factors(x, 3)
    np.testing.assert_allclose(fit.factors.T @ fit.factors / 50, np.eye(3), atol=1e-12)
    assert np.all(np.diff(fit.explained_variance) <= 0)


def test_sign_convention(rng):
    fit = pca_factors(rng.normal(size=(30, 6)), 2)
    assert np.all(fix_signs(fit.loadings) == 1)
    first = fit.loadings[np.argmax(np.abs(fit.loadings) > 1e-12, axis=0), range(2)]
    assert np.all(first > 0)


def test_flipping_the_panel_sign_keeps_factors_up_to_sign(rng):
    x = rng.normal(size=(30, 5))
    a = pca_factors(x, 2)
    b = pca_factors(-x, 2)
    np.testing.assert_allclose(np.abs(a.factors), np.abs(b.factors), atol=1e-10)


@pytest.mark.parametrize("r", [0, 7])
def test_bad_rank_request(r, rng):
    with pytest.raises(ConfigError):
        pca_factors(rng.normal(size=(6, 5)), r)


def test_rank_deficient_panel():
    x = np.outer(np.arange(1.0, 11.0), np.ones(4))
    with pytest.raises(NumericalError):
        pca_factors(x, 2)


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_fix_signs_is_idempotent(r, seed):
    L = np.random.default_rng(seed).normal(size=(7, r))
    d = fix_signs(L)
    assert set(np.unique(d)) <= {-1.0, 1.0}
    assert np.all(fix_signs(L * d) == 1)
