import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from conftest import GRAPH_DIR
from mgcurv import cli
from mgcurv.cli import ConfigError, RunConfig, main, run_verify
from oracles import equilateral_star_lambda1

INTERVAL = str(GRAPH_DIR / "interval.g")
CIRCLE = str(GRAPH_DIR / "circle.g")
STAR = str(GRAPH_DIR / "star3.g")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- verify -------------------------------------------------------------------

def test_interval_be_passes(tmp_path, capsys):
    code = main(["verify", "--graph", INTERVAL, "--suite", "be", "--out", str(tmp_path)])
    assert code == 0
    assert "PASS be/BE_w" in capsys.readouterr().out
    rows = read_csv(tmp_path / "summary.csv")
    assert [r["condition"] for r in rows] == ["BE_w"] and rows[0]["passed"] == "true"


def test_star_forced_C_fails_with_witness(tmp_path, capsys):
    code = main(["verify", "--graph", STAR, "--suite", "be", "--force-C", "1", "--out", str(tmp_path)])
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL be/BE_w" in out and "witness" in out
    report = json.loads((tmp_path / "report.json").read_text())
    be = report["suites"]["be"][0]
    assert not be["passed"] and be["violations"] > 0
    assert {"f", "t", "edge", "s", "residual", "tolerance"} <= set(be["witness"])
    assert report["curvature"]["C"] == 1.0


def test_missing_graph_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["verify", "--graph", str(tmp_path / "nope.g"), "--out", str(out)])
    assert code == 2
    assert not out.exists()
    assert "not found" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [["--h", "0"], ["--force-C", "0.5"], ["--t-grid=-1,0.1"], ["--eps-sweep", "0"], ["--pairs", "0"]],
)
def test_bad_config_exit_2(tmp_path, extra):
    out = tmp_path / "out"
    assert main(["verify", "--graph", INTERVAL, "--suite", "be", "--out", str(out), *extra]) == 2
    assert not out.exists()


def test_invalid_graph_file(tmp_path):
    bad = tmp_path / "bad.g"
    bad.write_text("vertices: [0]\nedges: [{tail: 0, head: 1, length: 1}]\n")
    assert main(["verify", "--graph", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--graph", INTERVAL, "--suite", "nope"])
    assert exc.value.code == 2


def test_float_list_parser():
    assert cli._floats("0, 0.1;0.5") == (0.0, 0.1, 0.5)
    with pytest.raises(Exception):
        cli._floats("a,b")


@pytest.fixture(scope="module")
def star_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("star")
    cfg = RunConfig(graph=STAR, suites=cli.SUITES, pairs=12, density_pairs=2, out=str(out))
    code, payload = run_verify(cfg)
    return code, payload, out


def test_report_schema(star_run):
    code, payload, out = star_run
    assert code == 0 and payload["passed"]
    doc = json.loads((out / "report.json").read_text())
    assert doc["schema_version"] == 1
    assert set(doc) == {"schema_version", "graph", "config", "curvature", "suites", "passed"}
    assert doc["graph"] == {"path": STAR, "vertices": 4, "edges": 3, "deg_max": 3}
    curv = doc["curvature"]
    assert curv["K"] == curv["lambda1"] and curv["C"] == curv["C_est"] and curv["floor"] == 2.0
    assert set(doc["suites"]) == set(cli.SUITES)
    for reps in doc["suites"].values():
        for rep in reps:
            assert rep["passed"] == (rep["worst_residual"] <= rep["tolerance"])
            assert set(rep) == {"condition", "passed", "cases", "violations", "worst_residual",
                                "tolerance", "tolerance_terms", "witness", "notes"}


def test_series_files_carry_tolerances(star_run):
    _, payload, out = star_run
    for name in cli.SUITES:
        rows = read_csv(out / f"series_{name}.csv")
        assert rows
        for r in rows:
            assert r["tolerance"] != "" and r["residual"] != ""
            assert math.isfinite(float(r["tolerance"]))
    summary = read_csv(out / "summary.csv")
    assert list(summary[0]) == list(cli.SUMMARY_COLUMNS)
    assert {r["suite"] for r in summary} == set(cli.SUITES)


def test_summary_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        cfg = RunConfig(graph=STAR, suites=("be", "kw", "evi"), pairs=6, density_pairs=2,
                        workers=1 + 2 * k, out=str(tmp_path / str(k)))
        run_verify(cfg)
        outs.append((tmp_path / str(k) / "summary.csv").read_bytes())
    assert outs[0] == outs[1]


def test_force_K_is_used(tmp_path):
    code, payload = run_verify(RunConfig(graph=INTERVAL, suites=("be",), force_K=0.0, force_C=1.0, out=str(tmp_path)))
    assert code == 0
    assert payload["curvature"]["K"] == 0.0 and payload["curvature"]["C"] == 1.0


# -- spectrum -----------------------------------------------------------------

def spectrum_lines(path, capsys):
    assert main(["spectrum", "--graph", path, "--h", "0.01"]) == 0
    return capsys.readouterr().out.strip().splitlines()


def parse_lambda1(line):
    return float(line.split("=")[1].split(",")[0])


def test_spectrum_interval(capsys):
    lines = spectrum_lines(INTERVAL, capsys)
    assert lines[0] == "index,eigenvalue"
    assert lines[1] == "0,0" or abs(float(lines[1].split(",")[1])) < 1e-8
    assert parse_lambda1(lines[-2]) == pytest.approx(math.pi**2, rel=1e-3)
    assert "multiplicity 1" in lines[-2]
    assert lines[-1].startswith("c(t) = C exp(-K t)")


def test_spectrum_circle_double(capsys):
    lines = spectrum_lines(CIRCLE, capsys)
    assert parse_lambda1(lines[-2]) == pytest.approx(4 * math.pi**2, rel=1e-3)
    assert "multiplicity 2" in lines[-2]


def test_spectrum_star(capsys):
    lines = spectrum_lines(STAR, capsys)
    assert parse_lambda1(lines[-2]) == pytest.approx(equilateral_star_lambda1(), rel=1e-4)
    assert "floor deg_max - 1 = 2" in lines[-1]


def test_spectrum_bad_args(tmp_path):
    assert main(["spectrum", "--graph", INTERVAL, "--count", "1"]) == 2
    assert main(["spectrum", "--graph", str(tmp_path / "x.g")]) == 2


# -- flow ---------------------------------------------------------------------

def run_flow(tmp_path, *args):
    out = tmp_path / "flow"
    code = main(["flow", "--graph", INTERVAL, "--out", str(out), *args])
    return code, (read_csv(out / "flow.csv") if code == 0 else None)


def column(rows, key):
    return np.array([float(r[key]) for r in rows])


def test_flow_uniform_constant(tmp_path):
    code, rows = run_flow(tmp_path, "--preset", "uniform")
    assert code == 0 and list(rows[0]) == ["t", "entropy", "fisher", "half_action", "D_partial"]
    for key in ("entropy", "fisher", "half_action", "D_partial"):
        assert np.abs(column(rows, key)).max() <= 1e-12


def test_flow_cosine(tmp_path):
    code, rows = run_flow(tmp_path, "--preset", "cosine", "--h", "0.01", "--steps", "80")
    assert code == 0
    assert len(rows) == 81
    assert np.all(np.diff(column(rows, "entropy")) < 0)
    D = column(rows, "D_partial")
    assert D[0] == 0 and np.abs(D).max() <= 1e-4


def test_flow_dirac_starts_at_t_min(tmp_path):
    code, rows = run_flow(tmp_path, "--preset", "dirac", "--t-min", "0.02", "--T", "0.3")
    assert code == 0
    t = column(rows, "t")
    assert t[0] == pytest.approx(0.02) and t[-1] == pytest.approx(0.3)
    ent = column(rows, "entropy")
    assert np.all(np.isfinite(ent)) and np.all(np.diff(ent) < 0)


def test_flow_polynomial_density(tmp_path):
    poly = tmp_path / "dens.yaml"
    poly.write_text("0: [1.0, 0.5]\n")
    code, rows = run_flow(tmp_path, "--poly", str(poly))
    assert code == 0
    assert column(rows, "entropy")[0] > 0 and np.all(np.diff(column(rows, "entropy")) < 0)


@pytest.mark.parametrize("text", ["[1, 2]", "5: [1.0]", "0: [-1.0]", "0: [1.0, {"])
def test_flow_bad_polynomial(tmp_path, text):
    poly = tmp_path / "dens.yaml"
    poly.write_text(text)
    assert run_flow(tmp_path, "--poly", str(poly))[0] == 2


def test_flow_bad_times(tmp_path):
    assert run_flow(tmp_path, "--t-min", "0.5", "--T", "0.2")[0] == 2


def test_flow_start_unknown_preset():
    from mgcurv.curvature import VerificationContext
    from mgcurv.graph import load_graph

    ctx = VerificationContext.build(load_graph(INTERVAL), 0.1)
    with pytest.raises(ConfigError):
        cli.flow_start(ctx, "nope")


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "mgcurv", "verify", "--graph", INTERVAL, "--suite", "be", "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("PASS be/BE_w")
