"""Command-line entry points: ``vbqfa extract`` and ``vbqfa simulate``."""

from __future__ import annotations

import argparse
import hashlib
import logging
import shutil
import sys
import time
from pathlib import Path

from . import __version__
from .cdg import cdg_fit
from .engine import fit_all_quantiles
from .errors import ConfigError, InputError, QfaError
from .gibbs import GibbsConfig, gibbs_fit
from .io import read_panel_csv, write_json, write_table_csv
from .panel import EstimatorConfig, Panel
from .pca import pca_factors, standardize
from .select import parse_range, select_r
from .simulate import FAMILIES, ESTIMATORS, DgpConfig, run_monte_carlo

log = logging.getLogger("vbqfa")

REPORT_SCHEMA_VERSION = "1.0"
DEFAULT_GRID = (50, 100)
FULL_GRID = (50, 100, 200)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _floats(text: str, what: str) -> list[float]:
    try:
        values = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} {text!r}") from exc
    if not values:
        raise ConfigError(f"no {what} given")
    return values


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from exc
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def tau_tag(tau: float) -> str:
    return f"{tau:g}"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _factor_names(r: int) -> list[str]:
    return [f"f{j + 1}" for j in range(r)]


class _Outputs:
    """Tracks written files so a failed run leaves nothing behind."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.created_dir = not directory.exists()
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.files.append(p)
        return p

    def rollback(self):
        for p in self.files:
            p.unlink(missing_ok=True)
        if self.created_dir and self.dir.exists() and not any(self.dir.iterdir()):
            shutil.rmtree(self.dir)


def _run(fn, argv) -> int:
    try:
        return fn(argv)
    except QfaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code


# --- extract -----------------------------------------------------------------


def extract_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vbqfa extract", description="Estimate quantile factors from a CSV panel.")
    p.add_argument("--input", required=True, help="CSV panel: header row, time labels in column 1")
    p.add_argument("--quantiles", default="0.1,0.5,0.9", help="comma-separated levels in (0,1)")
    how = p.add_mutually_exclusive_group()
    how.add_argument("--factors", type=int, default=None, help="number of factors (default 3)")
    how.add_argument("--select-r", default=None, metavar="LO..HI", help="choose r by ELBO, e.g. 1..8")
    p.add_argument("--estimator", choices=sorted(ESTIMATORS), default="vbqfa")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--no-intercept", action="store_true",
                   help="drop the per-series constant from the vbqfa and gibbs models")
    p.add_argument("--draws", type=int, default=5000, help="Gibbs draws including burn-in")
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=2)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for quantile levels")
    p.add_argument("--record-timings", action="store_true",
                   help="add wall-clock timings to report.json (makes it non-reproducible)")
    p.add_argument("--output-dir", default=".")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_factor_files(out: _Outputs, tag: str, panel: Panel, factors, loadings,
                        intercepts=None) -> dict:
    names = _factor_names(factors.shape[1])
    f_name, l_name = f"factors_{tag}.csv", f"loadings_{tag}.csv"
    write_table_csv(out.path(f_name), factors, panel.time_labels, names, panel.time_name)
    write_table_csv(out.path(l_name), loadings, panel.series_labels, names, "series")
    files = {"factors": f_name, "loadings": l_name}
    if intercepts is not None:
        files["intercepts"] = i_name = f"intercepts_{tag}.csv"
        write_table_csv(out.path(i_name), intercepts[:, None], panel.series_labels,
                        ["intercept"], "series")
    return files


def _extract(argv) -> int:
    args = extract_parser().parse_args(argv)
    _configure_logging(args.verbose)
    started = time.perf_counter()
    taus = _floats(args.quantiles, "quantile levels")
    if args.select_r is not None and args.estimator != "vbqfa":
        raise ConfigError("--select-r needs --estimator vbqfa (selection uses the ELBO)")
    candidates = parse_range(args.select_r) if args.select_r else None
    r = args.factors if args.factors is not None else 3
    config = EstimatorConfig(
        n_factors=candidates[0] if candidates else r,
        quantiles=tuple(taus),
        tol=args.tol,
        max_iters=args.max_iters,
        seed=args.seed,
        standardize=not args.no_standardize,
        intercept=not args.no_intercept,
    )
    gibbs = None
    if args.estimator == "gibbs":
        gibbs = GibbsConfig(n_draws=args.draws, burn_in=args.burn_in, thin=args.thin, seed=args.seed)

    in_path = Path(args.input)
    panel = read_panel_csv(in_path)
    if not candidates:
        config.validate_for(panel)

    out = _Outputs(Path(args.output_dir))
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "software": {"name": "vbqfa", "version": __version__},
        "command": "extract",
        "master_seed": args.seed,
        "input": {"path": args.input, "sha256": _sha256(in_path), "T": panel.T, "n": panel.n},
        "config": {
            "estimator": args.estimator,
            "quantiles": taus,
            "n_factors": None if candidates else r,
            "select_r": candidates,
            "tol": args.tol,
            "max_iters": args.max_iters,
            "standardize": config.standardize,
            "intercept": config.intercept,
            "prior": {"a0": config.a0, "b0": config.b0, "r0": config.r0, "s0": config.s0},
            "gibbs": None if gibbs is None else {
                "n_draws": gibbs.n_draws, "burn_in": gibbs.burn_in, "thin": gibbs.thin,
            },
        },
        "results": [],
        "selection": None,
        "timings": None,
    }
    timings = {}
    try:
        _extract_results(args, panel, config, taus, candidates, gibbs, out, report, timings)
        if args.record_timings:
            timings["total_seconds"] = time.perf_counter() - started
            report["timings"] = timings
        write_json(out.path("report.json"), report)
    except BaseException:
        out.rollback()
        raise
    return 0


def _extract_results(args, panel, config, taus, candidates, gibbs, out, report, timings):
    est = args.estimator
    if est == "pca":
        log.warning("pca ignores quantile levels %s; writing a single factor set",
                    ",".join(tau_tag(t) for t in taus))
        t0 = time.perf_counter()
        x = standardize(panel)[0] if config.standardize else panel
        pf = pca_factors(x, config.n_factors)
        files = _write_factor_files(out, "pca", panel, pf.factors, pf.loadings)
        timings["pca"] = time.perf_counter() - t0
        report["results"].append(
            {"tau": None, "estimator": "pca", "n_factors": config.n_factors, "files": files,
             "converged": True, "iters": 1, "elbo": None, "elbo_trace": [], "final_loss": None}
        )
        return

    if candidates:
        selections = []
        for tau in taus:
            t0 = time.perf_counter()
            sel = select_r(panel, config, tau, candidates, n_jobs=args.jobs)
            timings[tau_tag(tau)] = time.perf_counter() - t0
            selections.append(sel.to_dict())
            res = sel.fits[sel.chosen_r]
            files = _write_vb_files(out, tau, panel, res, config)
            report["results"].append(_vb_entry(res, files))
        report["selection"] = selections
        return

    if est == "vbqfa":
        t0 = time.perf_counter()
        fits = fit_all_quantiles(panel, config, n_jobs=args.jobs)
        timings["vbqfa"] = time.perf_counter() - t0
        if fits.failures:
            tau, exc = next(iter(fits.failures.items()))
            raise type(exc)(f"quantile level {tau_tag(tau)}: {exc}")
        for tau in config.taus:
            res = fits[tau]
            files = _write_vb_files(out, tau, panel, res, config)
            report["results"].append(_vb_entry(res, files))
        return

    for tau in taus:
        t0 = time.perf_counter()
        if est == "cdg":
            res = cdg_fit(panel, config.n_factors, tau, max_outer=config.max_iters,
                          tol=config.tol, standardize=config.standardize)
            factors, loadings, intercepts = res.factors, res.loadings, None
            entry = {"converged": res.converged, "iters": res.iters, "elbo": None,
                     "elbo_trace": [], "final_loss": res.final_loss}
        else:
            draws = gibbs_fit(panel, config, tau, gibbs)
            factors, loadings = draws.factor_mean, draws.loading_mean
            intercepts = draws.intercept_draws.mean(axis=0) if config.intercept else None
            entry = {"converged": True, "iters": draws.n_kept, "elbo": None,
                     "elbo_trace": [], "final_loss": None}
        timings[tau_tag(tau)] = time.perf_counter() - t0
        files = _write_factor_files(out, f"tau{tau_tag(tau)}", panel, factors, loadings, intercepts)
        report["results"].append(
            {"tau": tau, "estimator": est, "n_factors": config.n_factors, "files": files, **entry}
        )


def _write_vb_files(out, tau, panel, res, config) -> dict:
    intercepts = res.intercept_mean if config.intercept else None
    return _write_factor_files(out, f"tau{tau_tag(tau)}", panel, res.factor_mean,
                               res.loading_mean, intercepts)


def _vb_entry(res, files) -> dict:
    return {
        "tau": res.tau,
        "estimator": "vbqfa",
        "n_factors": res.n_factors,
        "files": files,
        "converged": res.converged,
        "iters": res.iters_used,
        "elbo": res.elbo,
        "elbo_trace": list(res.elbo_trace),
        "final_loss": None,
    }


def cli_extract(argv=None) -> int:
    """Run ``extract`` and return its exit code (0, 2 input, 3 numerical, 4 config)."""
    return _run(_extract, sys.argv[1:] if argv is None else list(argv))


# --- simulate ----------------------------------------------------------------


def simulate_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vbqfa simulate", description="Monte Carlo comparison of factor estimators.")
    p.add_argument("--families", default="M1", help="comma list or range, e.g. M1,M4 or M1..M6")
    p.add_argument("--grid", nargs="+", default=None, metavar="T=..|n=..",
                   help="sizes, e.g. T=50,100 n=50,100")
    p.add_argument("--full-grid", action="store_true", help="T, n in {50, 100, 200}")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--quantiles", default="0.25,0.5,0.75")
    p.add_argument("--estimators", default="vbqfa,cdg,pca")
    p.add_argument("--factors", type=int, default=3, help="true and estimated number of factors")
    p.add_argument("--snr", default="off", help="target common-component R^2 in (0,1), or off")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output-dir", default=".")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_families(text: str) -> list[str]:
    text = text.strip().upper()
    if ".." in text:
        lo, hi = text.split("..", 1)
        if lo not in FAMILIES or hi not in FAMILIES:
            raise ConfigError(f"unknown family range {text!r}; families are {', '.join(FAMILIES)}")
        return list(FAMILIES[FAMILIES.index(lo): FAMILIES.index(hi) + 1])
    fams = [s.strip() for s in text.split(",") if s.strip()]
    bad = [f for f in fams if f not in FAMILIES]
    if bad or not fams:
        raise ConfigError(f"unknown error families {bad}; choose from {', '.join(FAMILIES)}")
    return fams


def parse_grid(tokens, full: bool) -> tuple[list[int], list[int]]:
    sizes = {"T": list(FULL_GRID if full else DEFAULT_GRID), "n": list(FULL_GRID if full else DEFAULT_GRID)}
    for tok in tokens or ():
        key, _, vals = tok.partition("=")
        key = key.strip()
        if key not in sizes or not vals:
            raise ConfigError(f"bad grid entry {tok!r}; use T=50,100 or n=50,100")
        try:
            sizes[key] = [int(v) for v in vals.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad grid entry {tok!r}") from exc
    return sizes["T"], sizes["n"]


def _simulate(argv) -> int:
    args = simulate_parser().parse_args(argv)
    _configure_logging(args.verbose)
    families = parse_families(args.families)
    Ts, ns = parse_grid(args.grid, args.full_grid)
    taus = _floats(args.quantiles, "quantile levels")
    estimators = [s.strip() for s in args.estimators.split(",") if s.strip()]
    if args.snr.lower() == "off":
        snr = None
    else:
        snr = _floats(args.snr, "signal-to-noise target")[0]
    cells = [
        DgpConfig(T=T, n=n, r=args.factors, error_family=fam, snr_target=snr)
        for fam in families
        for T in Ts
        for n in ns
    ]
    result = run_monte_carlo(
        cells, estimators, taus, args.reps, master_seed=args.seed,
        standardize=not args.no_standardize, n_jobs=args.jobs,
    )
    out = _Outputs(Path(args.output_dir))
    try:
        out.path("replications.csv").write_text(result.to_csv(), encoding="utf-8")
        out.path("summary.json").write_text(result.to_json(), encoding="utf-8")
    except BaseException:
        out.rollback()
        raise
    flagged = [row for row in result.summary() if row["flagged"]]
    for row in flagged:
        log.warning("cell %s %s tau=%g: %d of %d replications failed",
                    row["cell"], row["estimator"], row["tau"], row["failures"], row["reps"])
    return 0


def cli_simulate(argv=None) -> int:
    """Run ``simulate`` and return its exit code."""
    return _run(_simulate, sys.argv[1:] if argv is None else list(argv))


# --- dispatch ----------------------------------------------------------------


def _configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )


COMMANDS = {"extract": cli_extract, "simulate": cli_simulate}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        print("usage: vbqfa {extract,simulate} [options]\n\n"
              "  extract   estimate quantile factors from a CSV panel\n"
              "  simulate  Monte Carlo comparison on synthetic panels")
        return 0 if argv else ConfigError.exit_code
    if argv[0] == "--version":
        print(__version__)
        return 0
    cmd = COMMANDS.get(argv[0])
    if cmd is None:
        print(f"error: unknown command {argv[0]!r}; use extract or simulate", file=sys.stderr)
        return ConfigError.exit_code
    return cmd(argv[1:])


if __name__ == "__main__":
    sys.exit(main())
