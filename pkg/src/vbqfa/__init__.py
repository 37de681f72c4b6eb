"""Probabilistic quantile factor analysis via variational Bayes."""

__version__ = "0.1.0"

from .cdg import cdg_fit  # noqa: E402
from .engine import fit, fit_all_quantiles  # noqa: E402
from .gibbs import GibbsConfig, gibbs_fit  # noqa: E402
from .io import read_panel_csv  # noqa: E402
from .panel import EstimatorConfig, Panel, QfaFit  # noqa: E402
from .pca import pca_factors  # noqa: E402
from .select import select_r  # noqa: E402

__all__ = [
    "EstimatorConfig", "GibbsConfig", "Panel", "QfaFit",
    "cdg_fit", "fit", "fit_all_quantiles", "gibbs_fit", "pca_factors",
    "read_panel_csv", "select_r",
]
