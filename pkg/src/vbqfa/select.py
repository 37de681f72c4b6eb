"""Choosing the number of factors by the converged ELBO."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .engine import fit
from .errors import ConfigError, NumericalError, QfaError
from .panel import EstimatorConfig, Panel, QfaFit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    r: int
    elbo: float | None
    converged: bool
    iters: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True, eq=False)
class SelectionReport:
    """Per-candidate outcomes in the order given, and the chosen ``r``.

    Only converged fits compete; non-converged or failed candidates are kept
    in the report with their flags.
    """

    candidates: tuple[Candidate, ...]
    chosen_r: int
    tau: float
    elbo_traces: dict[int, tuple[float, ...]]
    fits: dict[int, QfaFit]

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "chosen_r": self.chosen_r,
            "candidates": [
                {
                    "r": c.r,
                    "elbo": c.elbo,
                    "converged": c.converged,
                    "iters": c.iters,
                    "error": c.error,
                }
                for c in self.candidates
            ],
            "elbo_traces": {str(r): list(t) for r, t in self.elbo_traces.items()},
        }


def parse_range(text: str) -> list[int]:
    """``"1..6"`` or ``"1,3,5"`` -> list of ints."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = (int(s) for s in text.split("..", 1))
            values = list(range(lo, hi + 1))
        else:
            values = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse factor range {text!r}; use e.g. 1..6") from exc
    if not values:
        raise ConfigError(f"empty factor range {text!r}")
    return values


def _fit_candidate(args):
    panel, config, tau = args
    try:
        return fit(panel, config, tau)
    except QfaError as exc:
        return exc


def choose(candidates: Sequence[Candidate]) -> int:
    """Largest ELBO among converged candidates; ties go to the smaller ``r``."""
    ok = [c for c in candidates if not c.failed and c.converged]
    if not ok:
        raise NumericalError("no candidate number of factors produced a converged fit")
    best = max(c.elbo for c in ok)
    return min(c.r for c in ok if c.elbo == best)


def select_r(
    panel,
    config: EstimatorConfig,
    tau: float,
    r_candidates: Sequence[int],
    n_jobs: int = 1,
) -> SelectionReport:
    """Fit every candidate independently and keep the one with the largest ELBO."""
    if not isinstance(panel, Panel):
        panel = Panel(panel)
    rs = [int(r) for r in r_candidates]
    if not rs:
        raise ConfigError("at least one candidate number of factors is required")
    if len(set(rs)) != len(rs):
        raise ConfigError(f"duplicate candidates in {rs}")
    for r in rs:
        if not 1 <= r < panel.n or r > panel.T:
            raise ConfigError(f"candidate r={r} must satisfy 1 <= r < n={panel.n} and r <= T")
    jobs = [(panel, replace(config, n_factors=r), tau) for r in rs]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(_fit_candidate, jobs))
    else:
        outcomes = [_fit_candidate(j) for j in jobs]

    candidates, traces, fits = [], {}, {}
    for r, out in zip(rs, outcomes):
        if isinstance(out, QfaError):
            log.warning("candidate r=%d failed: %s", r, out)
            candidates.append(Candidate(r, None, False, 0, str(out)))
            continue
        candidates.append(Candidate(r, out.elbo, out.converged, out.iters_used))
        traces[r] = out.elbo_trace
        fits[r] = out
        if not out.converged:
            log.warning("candidate r=%d did not converge in %d iterations", r, out.iters_used)
    chosen = choose(candidates)
    return SelectionReport(tuple(candidates), chosen, float(tau), traces, fits)
