import csv
import json
import subprocess
import sys

import jsonschema
import pytest

from vbqfa import cli
from vbqfa.io import load_schema, write_panel_csv
from vbqfa.simulate import DgpConfig, generate_panel


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    panel, _ = generate_panel(DgpConfig(T=40, n=15, seed=8))
    return write_panel_csv(tmp_path_factory.mktemp("in") / "panel.csv", panel, exact=True)


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def _report(d):
    body = json.loads((d / "report.json").read_text())
    jsonschema.validate(body, load_schema())
    return body


def test_extract_vbqfa_outputs(small_csv, tmp_path):
    out = tmp_path / "run"
    code = cli.main(["extract", "--input", str(small_csv), "--quantiles", "0.25,0.75",
                     "--factors", "2", "--output-dir", str(out)])
    assert code == 0
    assert set(_files(out)) == {
        "report.json",
        "factors_tau0.25.csv", "loadings_tau0.25.csv", "intercepts_tau0.25.csv",
        "factors_tau0.75.csv", "loadings_tau0.75.csv", "intercepts_tau0.75.csv",
    }
    rows = list(csv.reader((out / "factors_tau0.25.csv").open()))
    assert rows[0] == ["time", "f1", "f2"] and len(rows) == 41
    rows = list(csv.reader((out / "loadings_tau0.75.csv").open()))
    assert rows[0] == ["series", "f1", "f2"] and len(rows) == 16
    rep = _report(out)
    assert rep["timings"] is None
    assert [r["tau"] for r in rep["results"]] == [0.25, 0.75]
    assert all(r["converged"] and r["elbo"] == r["elbo_trace"][-1] for r in rep["results"])


def test_identical_runs_are_byte_identical(small_csv, tmp_path):
    args = ["extract", "--input", str(small_csv), "--quantiles", "0.1,0.5", "--seed", "17"]
    assert cli.main(args + ["--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--output-dir", str(tmp_path / "b")]) == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b


def test_select_r_report(small_csv, tmp_path):
    out = tmp_path / "sel"
    assert cli.main(["extract", "--input", str(small_csv), "--quantiles", "0.5",
                     "--select-r", "1..4", "--output-dir", str(out)]) == 0
    rep = _report(out)
    sel = rep["selection"][0]
    assert rep["config"]["n_factors"] is None and rep["config"]["select_r"] == [1, 2, 3, 4]
    assert [c["r"] for c in sel["candidates"]] == [1, 2, 3, 4]
    assert rep["results"][0]["n_factors"] == sel["chosen_r"]


@pytest.mark.parametrize(
    "extra,produced",
    [
        (["--estimator", "cdg"], {"factors_tau0.5.csv", "loadings_tau0.5.csv"}),
        (["--estimator", "gibbs", "--draws", "60", "--burn-in", "20", "--thin", "4"],
         {"factors_tau0.5.csv", "loadings_tau0.5.csv", "intercepts_tau0.5.csv"}),
        (["--estimator", "pca"], {"factors_pca.csv", "loadings_pca.csv"}),
        (["--no-intercept"], {"factors_tau0.5.csv", "loadings_tau0.5.csv"}),
    ],
)
def test_other_estimators(small_csv, tmp_path, extra, produced, caplog):
    out = tmp_path / "o"
    assert cli.main(["extract", "--input", str(small_csv), "--quantiles", "0.5",
                     "--factors", "2", "--output-dir", str(out), *extra]) == 0
    assert set(_files(out)) == produced | {"report.json"}
    _report(out)
    if "pca" in extra:
        assert "ignores quantile levels" in caplog.text


def test_record_timings(small_csv, tmp_path):
    out = tmp_path / "t"
    assert cli.main(["extract", "--input", str(small_csv), "--quantiles", "0.5",
                     "--record-timings", "--output-dir", str(out)]) == 0
    assert _report(out)["timings"]["total_seconds"] > 0


@pytest.mark.parametrize(
    "args,code",
    [
        (["--quantiles", "0.5,1.5"], 4),
        (["--quantiles", "abc"], 4),
        (["--factors", "0"], 4),
        (["--factors", "2", "--select-r", "1..3"], 4),
        (["--estimator", "cdg", "--select-r", "1..3"], 4),
        (["--draws", "10", "--burn-in", "10", "--estimator", "gibbs"], 4),
        (["--seed", "-1"], 4),
        (["--bogus"], 4),
    ],
)
def test_config_errors_exit_4(small_csv, tmp_path, args, code, capsys):
    out = tmp_path / "x"
    assert cli.main(["extract", "--input", str(small_csv), "--output-dir", str(out), *args]) == code
    assert "error:" in capsys.readouterr().err
    assert not out.exists()


def test_input_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,a,b\n1,1,NA\n2,2,3\n")
    assert cli.main(["extract", "--input", str(bad), "--output-dir", str(tmp_path / "o")]) == 2
    assert "missing value at row 2, column 3" in capsys.readouterr().err
    assert cli.main(["extract", "--input", str(tmp_path / "none.csv")]) == 2


def test_numerical_failure_exits_3_and_rolls_back(small_csv, tmp_path, monkeypatch):
    from vbqfa import engine
    from vbqfa.errors import NumericalError

    real = engine.fit

    def flaky(panel, config, q=None):
        if q.tau == 0.9:
            raise NumericalError("synthetic", iteration=4)
        return real(panel, config, q)

    monkeypatch.setattr(engine, "fit", flaky)
    out = tmp_path / "r"
    code = cli.main(["extract", "--input", str(small_csv), "--quantiles", "0.5,0.9",
                     "--output-dir", str(out)])
    assert code == 3
    assert not out.exists()


def test_rollback_keeps_existing_directory(small_csv, tmp_path, monkeypatch):
    from vbqfa.errors import NumericalError

    out = tmp_path / "keep"
    out.mkdir()
    (out / "other.txt").write_text("mine")

    def boom(*a, **k):
        raise NumericalError("synthetic")

    monkeypatch.setattr(cli, "write_json", boom)
    assert cli.main(["extract", "--input", str(small_csv), "--quantiles", "0.5",
                     "--output-dir", str(out)]) == 3
    assert sorted(p.name for p in out.iterdir()) == ["other.txt"]


def test_simulate_writes_tables(tmp_path):
    out = tmp_path / "sim"
    code = cli.main(["simulate", "--families", "M1,M4", "--grid", "T=30", "n=20", "--reps", "2",
                     "--quantiles", "0.5", "--estimators", "vbqfa,pca", "--seed", "5",
                     "--output-dir", str(out)])
    assert code == 0
    rows = list(csv.DictReader((out / "replications.csv").open()))
    assert len(rows) == 2 * 2 * 2
    assert {r["family"] for r in rows} == {"M1", "M4"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["reps"] == 2 and len(summary["summary"]) == 4


@pytest.mark.parametrize(
    "args", [["--families", "M7"], ["--grid", "X=3"], ["--estimators", "ols"], ["--snr", "2"]]
)
def test_simulate_config_errors(tmp_path, args):
    assert cli.main(["simulate", "--reps", "1", "--output-dir", str(tmp_path / "s"), *args]) == 4


def test_family_range():
    assert cli.parse_families("m2..m4") == ["M2", "M3", "M4"]


def test_dispatch():
    assert cli.main(["frobnicate"]) == 4
    assert cli.main([]) == 4
    assert cli.main(["--help"]) == 0


def test_console_script_is_installed():
    out = subprocess.run([sys.executable, "-m", "vbqfa.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip()
