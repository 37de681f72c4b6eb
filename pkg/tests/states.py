"""Random variational states and small panels for update-level tests."""

import numpy as np

from vbqfa.engine import VariationalState


def random_spd(rng, batch, r, scale=0.3):
    A = rng.normal(scale=scale, size=(batch, r, r))
    return A @ np.swapaxes(A, 1, 2) + 0.05 * np.eye(r)


def random_state(rng, T=7, n=5, r=2):
    """A valid state with every block away from its initial value."""
    return VariationalState(
        mu_lambda=rng.normal(size=(n, r)),
        Sigma_lambda=random_spd(rng, n, r),
        mu_f=rng.normal(size=(T, r)),
        Sigma_f=random_spd(rng, T, r),
        alpha_shape=float(rng.uniform(0.5, 3.0)),
        alpha_rate=rng.uniform(0.2, 3.0, size=(n, r)),
        sigma_shape=float(rng.uniform(1.0, 20.0)),
        sigma_scale=rng.uniform(0.5, 20.0, size=n),
        z_a=rng.uniform(0.2, 5.0, size=(n, T)),
        z_b=rng.uniform(0.01, 5.0, size=(n, T)),
        intercept_mean=rng.normal(scale=0.5, size=n),
        intercept_var=rng.uniform(0.01, 1.0, size=n),
    )


def random_panel(rng, T=7, n=5):
    return rng.standard_t(3, size=(T, n))
