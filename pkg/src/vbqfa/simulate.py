"""Synthetic factor panels, trace R^2 scoring and the Monte Carlo driver."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .cdg import cdg_fit
from .engine import fit
from .errors import ConfigError, NumericalError, QfaError
from .gibbs import GibbsConfig, gibbs_fit
from .panel import EstimatorConfig, Panel
from .pca import pca_factors, standardize as _standardize

log = logging.getLogger(__name__)

# (weights, means, sds) of the normal-mixture error families; M1 is Student t(3).
MIXTURES = {
    "M2": ((2 / 3, 1 / 3), (0.0, 0.0), (1.0, 0.1)),
    "M3": ((0.1, 0.9), (0.0, 0.0), (1.0, 0.1)),
    "M4": ((0.5, 0.5), (-1.0, 1.0), (2 / 3, 2 / 3)),
    "M5": ((0.5, 0.5), (-1.5, 1.5), (0.5, 0.5)),
    "M6": ((0.75, 0.25), (-0.43, 1.07), (1.0, 1 / 3)),
}
FAMILIES = ("M1",) + tuple(MIXTURES)


def error_moments(family: str) -> tuple[float, float]:
    """Population mean and variance of an error family."""
    if family == "M1":
        return 0.0, 3.0
    try:
        w, m, s = (np.asarray(v) for v in MIXTURES[family])
    except KeyError:
        raise ConfigError(f"unknown error family {family!r}") from None
    mean = float(w @ m)
    return mean, float(w @ (s**2 + m**2) - mean**2)


def draw_error(family: str, rng: np.random.Generator, size=None):
    """Draw idiosyncratic errors from family M1..M6."""
    if family == "M1":
        return rng.standard_t(3, size=size)
    if family not in MIXTURES:
        raise ConfigError(f"unknown error family {family!r}")
    w, m, s = (np.asarray(v) for v in MIXTURES[family])
    k = rng.choice(len(w), size=size, p=w)
    return m[k] + s[k] * rng.standard_normal(size=size)


@dataclass(frozen=True)
class DgpConfig:
    T: int
    n: int
    r: int = 3
    ar_coef: float = 0.8
    error_family: str = "M1"
    snr_target: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.error_family not in FAMILIES:
            raise ConfigError(f"unknown error family {self.error_family!r}")
        if not abs(self.ar_coef) < 1:
            raise ConfigError(f"AR coefficient must satisfy |a| < 1, got {self.ar_coef}")
        if self.T < 2 or self.n < 2 or self.r < 1:
            raise ConfigError(f"invalid dimensions T={self.T}, n={self.n}, r={self.r}")
        if self.snr_target is not None and not 0 < self.snr_target < 1:
            raise ConfigError(f"snr_target must lie in (0, 1), got {self.snr_target}")

    @property
    def label(self) -> str:
        snr = "off" if self.snr_target is None else f"{self.snr_target:g}"
        return f"{self.error_family}_T{self.T}_n{self.n}_r{self.r}_snr{snr}"


def common_scale(cfg: DgpConfig) -> float:
    """Multiplier on the common component giving population R^2 = snr_target."""
    if cfg.snr_target is None:
        return 1.0
    v_common = cfg.r / (1.0 - cfg.ar_coef**2)
    _, v_noise = error_moments(cfg.error_family)
    s = cfg.snr_target
    return math.sqrt(s * v_noise / ((1.0 - s) * v_common))


def generate_panel(cfg: DgpConfig, return_parts: bool = False):
    """Draw ``x = f lambda' + u`` with AR(1) factors started from stationarity.

    Returns ``(panel, true_factors)``; with ``return_parts`` the common
    component and errors are appended.
    """
    rng = np.random.default_rng(cfg.seed)
    rho = cfg.ar_coef
    loadings = rng.standard_normal((cfg.n, cfg.r))
    f_prev = rng.standard_normal(cfg.r) / math.sqrt(1.0 - rho**2)
    shocks = rng.standard_normal((cfg.T, cfg.r))
    factors = np.empty((cfg.T, cfg.r))
    for t in range(cfg.T):
        f_prev = rho * f_prev + shocks[t]
        factors[t] = f_prev
    errors = draw_error(cfg.error_family, rng, size=(cfg.T, cfg.n))
    common = common_scale(cfg) * factors @ loadings.T
    panel = Panel(common + errors)
    if return_parts:
        return panel, factors, common, errors
    return panel, factors


def sample_r2(common: np.ndarray, errors: np.ndarray) -> float:
    """Pooled share of demeaned panel variation due to the common component."""
    c = common - common.mean(axis=0)
    x = c + errors - errors.mean(axis=0)
    return float(np.sum(c * c) / np.sum(x * x))


def trace_r2(est_factors, true_factors) -> float:
    """``tr(F_hat' P_F F_hat) / tr(F_hat' F_hat)`` with ``P_F`` projecting on ``F``."""
    fh = np.asarray(est_factors, dtype=float)
    f = np.asarray(true_factors, dtype=float)
    if fh.ndim == 1:
        fh = fh[:, None]
    if f.ndim == 1:
        f = f[:, None]
    if fh.shape[0] != f.shape[0]:
        raise ConfigError(f"factor lengths differ: {fh.shape[0]} vs {f.shape[0]}")
    if np.linalg.matrix_rank(f) < f.shape[1]:
        raise NumericalError("true factors are rank deficient")
    denom = np.sum(fh * fh)
    if denom == 0:
        return 0.0
    coef, *_ = np.linalg.lstsq(f, fh, rcond=None)
    proj = f @ coef
    return float(np.clip(np.sum(proj * fh) / denom, 0.0, 1.0))


# Estimator adapters: (panel, r, tau, seed, standardize) -> T x r factors.

def _est_vbqfa(panel, r, tau, seed, standardize):
    cfg = EstimatorConfig(n_factors=r, quantiles=(tau,), seed=seed, standardize=standardize)
    return fit(panel, cfg, tau).factor_mean


def _est_cdg(panel, r, tau, seed, standardize):
    return cdg_fit(panel, r, tau, standardize=standardize).factors


def _est_pca(panel, r, tau, seed, standardize):
    if standardize:
        panel, _, _ = _standardize(panel)
    return pca_factors(panel, r).factors


def _est_gibbs(panel, r, tau, seed, standardize):
    cfg = EstimatorConfig(n_factors=r, quantiles=(tau,), seed=seed, standardize=standardize)
    return gibbs_fit(panel, cfg, tau, GibbsConfig(seed=seed)).factor_mean


ESTIMATORS: dict[str, Callable] = {
    "vbqfa": _est_vbqfa,
    "cdg": _est_cdg,
    "pca": _est_pca,
    "gibbs": _est_gibbs,
}


def derive_seed(master_seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


RECORD_FIELDS = (
    "cell", "family", "T", "n", "r", "snr", "rep", "seed",
    "estimator", "tau", "trace_r2", "error",
)


@dataclass
class SimResult:
    """Per-replication trace R^2 records plus per-cell summaries."""

    records: list[dict] = field(default_factory=list)
    master_seed: int = 0
    reps: int = 0

    def summary(self) -> list[dict]:
        groups: dict[tuple, list[dict]] = {}
        for rec in self.records:
            key = (rec["cell"], rec["estimator"], rec["tau"])
            groups.setdefault(key, []).append(rec)
        out = []
        for (cell, est, tau), recs in groups.items():
            ok = np.array([r["trace_r2"] for r in recs if not r["error"]], dtype=float)
            failed = len(recs) - ok.size
            se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else float("nan")
            first = recs[0]
            out.append(
                {
                    "cell": cell,
                    "family": first["family"],
                    "T": first["T"],
                    "n": first["n"],
                    "r": first["r"],
                    "snr": first["snr"],
                    "estimator": est,
                    "tau": tau,
                    "reps": len(recs),
                    "failures": failed,
                    "flagged": failed > 0.05 * len(recs),
                    "mean": float(ok.mean()) if ok.size else float("nan"),
                    "se": se,
                }
            )
        return out

    def cell(self, estimator: str, tau: float, cell: str | None = None) -> dict:
        for row in self.summary():
            if row["estimator"] == estimator and row["tau"] == tau and (
                cell is None or row["cell"] == cell
            ):
                return row
        raise KeyError((estimator, tau, cell))

    def scores(self, estimator: str, tau: float, cell: str | None = None) -> np.ndarray:
        return np.array(
            [
                r["trace_r2"]
                for r in self.records
                if r["estimator"] == estimator
                and r["tau"] == tau
                and (cell is None or r["cell"] == cell)
                and not r["error"]
            ]
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RECORD_FIELDS)
        for rec in self.records:
            row = []
            for k in RECORD_FIELDS:
                v = rec[k]
                if isinstance(v, float):
                    v = "" if math.isnan(v) else f"{v:.12g}"
                elif v is None:
                    v = ""
                row.append(v)
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        body = {
            "master_seed": self.master_seed,
            "reps": self.reps,
            "summary": _nan_to_none(self.summary()),
        }
        return json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _nan_to_none(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def _run_replication(job):
    cfg, cell_label, rep, estimators, taus, r, standardize = job
    panel, factors = generate_panel(cfg)
    rows = []
    for name in estimators:
        fn = ESTIMATORS[name]
        pca_cache = None
        for tau in taus:
            rec = {
                "cell": cell_label,
                "family": cfg.error_family,
                "T": cfg.T,
                "n": cfg.n,
                "r": r,
                "snr": cfg.snr_target,
                "rep": rep,
                "seed": cfg.seed,
                "estimator": name,
                "tau": tau,
                "trace_r2": float("nan"),
                "error": "",
            }
            try:
                if name == "pca" and pca_cache is not None:
                    est = pca_cache
                else:
                    est = fn(panel, r, tau, cfg.seed, standardize)
                    if name == "pca":
                        pca_cache = est
                rec["trace_r2"] = trace_r2(est, factors)
            except (QfaError, np.linalg.LinAlgError, FloatingPointError) as exc:
                rec["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(rec)
    return rows


def run_monte_carlo(
    cells: Sequence[DgpConfig],
    estimators: Iterable[str],
    taus: Iterable[float],
    reps: int,
    master_seed: int = 0,
    n_factors: int | None = None,
    standardize: bool = True,
    n_jobs: int = 1,
) -> SimResult:
    """Score every estimator at every quantile on ``reps`` draws of each cell.

    Replication seeds are derived from ``(master_seed, cell index, rep)``, so
    results do not depend on ``n_jobs``. Estimators share each draw. The
    number of estimated factors defaults to each cell's true ``r``.
    """
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    estimators = tuple(estimators)
    taus = tuple(float(t) for t in taus)
    for name in estimators:
        if name not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}")
    jobs = []
    for c, cell in enumerate(cells):
        for rep in range(reps):
            cfg = replace(cell, seed=derive_seed(master_seed, c, rep))
            r = n_factors or cell.r
            jobs.append((cfg, cell.label, rep, estimators, taus, r, standardize))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(_run_replication, jobs))
    else:
        chunks = [_run_replication(j) for j in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    return SimResult(records=records, master_seed=int(master_seed), reps=reps)
