import json

import pytest

from rosenblatt_nii.cli import REPORT_ENV, main, run_example4
from rosenblatt_nii.io import read_path_csv


@pytest.fixture(scope="module")
def example4(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex4")
    report, code = run_example4(report_dir=str(out))
    return out, report, code


def test_example4_passes(example4):
    out, report, code = example4
    assert code == 0 and report["failing"] == []
    for name in ("path.csv", "history.csv", "history.csv.tail.json", "selection.csv", "noise.csv",
                 "trace.json", "hypotheses.json", "report.json"):
        assert (out / name).exists(), name
    assert report["solver"]["verdict"] == "converged"
    assert report["L_u"] == pytest.approx(0.70710678, abs=1e-8)


def test_report_json_roundtrip(example4):
    out, report, _ = example4
    data = json.loads((out / "report.json").read_text())
    assert set(data["checks"]) == {"kozak", "lemma21", "lemma23", "m0", "bihari", "growth"}
    header, times, values = read_path_csv(out / "path.csv")
    assert header[0] == "t"
    assert values.shape == (129, 16)


def test_hurst_override(tmp_path):
    report, code = run_example4(["H=0.6", "M=0"], report_dir=str(tmp_path), checks=["m0"])
    assert report["c_H"] == pytest.approx(0.7655, abs=1e-4)
    assert report["solver"]["branch_coverage"]["base_only"]
    assert code == 0


def test_noise_command(tmp_path, capsys):
    out = tmp_path / "z.csv"
    assert main(["noise", "--hurst", "0.75", "--n", "64", "--seed", "3", "--out", str(out)]) == 0
    _, times, values = read_path_csv(out)
    assert times.size == 65 and values[0, 0] == 0.0
    assert "wrote" in capsys.readouterr().out


def test_certify_zero_config(tmp_path, monkeypatch):
    cfg = tmp_path / "zero.json"
    cfg.write_text(json.dumps({"galerkin_dim": 2, "checks": ["m0"]}))
    monkeypatch.setenv(REPORT_ENV, str(tmp_path / "rep"))
    assert main(["certify", str(cfg), "--checks", "m0"]) == 0
    rep = json.loads((tmp_path / "rep" / "report.json").read_text())
    m0 = rep["checks"]["m0"]
    assert m0["M0_lemma"] == m0["M0_thm"] == m0["M0_hat"] == 0.0
    assert "solver" not in rep


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "hurst": 1.5\n}\n')
    assert main(["solve", str(cfg), "--report-dir", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_check_rejected(tmp_path):
    cfg = tmp_path / "zero.json"
    cfg.write_text(json.dumps({"galerkin_dim": 2}))
    assert main(["certify", str(cfg), "--checks", "m0,astrology", "--report-dir", str(tmp_path)]) == 2
