import csv
import json

import pytest

from clebschlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_STRICT, EXIT_VERIFY, main, observed_order

SMALL_SHEAR = """
[scenario]
name = "shear"

[resolution]
panels = 1
steps_per_unit = 16

[run]
param_max = 0.5
every = 0.25
f = "x^2"
diagnostics = ["enstrophy", "residuals"]
residual_stride = 4
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_rest(tmp_path, capsys):
    cfg = write(tmp_path, '[scenario]\nname = "rest"\n[resolution]\npanels = 1\n[run]\nevery = 0.5\n')
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--output", str(out), "--strict"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["drifts"]["Q"] == 0.0
    assert summary["provenance"]["config"]["scenario"] == {"name": "rest"}
    rows = list(csv.DictReader((out / "series.csv").open()))
    assert [float(r["param"]) for r in rows] == [0.0, 0.5, 1.0]
    assert "frakQ_conservation" in capsys.readouterr().out


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, '[scenario]\nname = "shear"\n[resolution]\npanels = -2\n')
    assert main(["run", "--config", cfg]) == EXIT_CONFIG
    assert "resolution.panels" in capsys.readouterr().err


def test_strict_exit_on_failed_invariant(tmp_path):
    # a coarse drift law with a huge difference step misses the 1e-2 tolerance
    text = SMALL_SHEAR.replace("residual_stride = 4", "residual_stride = 4\ndelta = 0.4")
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    code = main(["run", "--config", cfg, "--output", str(out), "--strict"])
    summary = json.loads((out / "summary.json").read_text())
    assert summary["invariants"]["frakQ_conservation"]["pass"]
    assert code == (EXIT_OK if summary["passed"] else EXIT_STRICT)


def test_run_is_deterministic_across_threads(tmp_path):
    cfg = write(tmp_path, SMALL_SHEAR)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--output", str(a), "--threads", "1"]) == EXIT_OK
    assert main(["run", "--config", cfg, "--output", str(b), "--threads", "3"]) == EXIT_OK
    assert (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()
    sa = json.loads((a / "summary.json").read_text())
    sb = json.loads((b / "summary.json").read_text())
    sa["provenance"]["resolution"].pop("threads")
    sb["provenance"]["resolution"].pop("threads")
    assert sa == sb


def test_verify_passes_and_injected_failure_detected(capsys):
    assert main(["verify", "--suite", "forms", "--seed", "3"]) == EXIT_OK
    assert main(["verify", "--suite", "forms", "--seed", "3", "--inject-failure"]) == EXIT_VERIFY
    out = capsys.readouterr().out
    assert "failing properties:" in out and "inputs=" in out


def test_convergence_rest_reports_na(tmp_path, capsys):
    assert main(["convergence", "--scenario", "rest", "--levels", "3", "--output", str(tmp_path)]) == EXIT_OK
    rows = list(csv.reader((tmp_path / "convergence.csv").open()))
    assert rows[0][:2] == ["level", "steps_per_unit"]
    # ohm carries the pressure forcing of the held-still wavy density, so only the other three are n/a
    assert rows[1][-1] == "" and rows[2][-4:-1] == ["n/a"] * 3


def test_convergence_rejects_bad_input(tmp_path):
    assert main(["convergence", "--scenario", "nowhere", "--output", str(tmp_path)]) == EXIT_CONFIG
    assert main(["convergence", "--scenario", "rest", "--levels", "2", "--output", str(tmp_path)]) == EXIT_CONFIG


@pytest.mark.parametrize("prev,cur,expected", [(4e-4, 1e-4, 2.0), (1e-13, 1e-14, None), (1.0, 0.5, 1.0)])
def test_observed_order(prev, cur, expected):
    got = observed_order(prev, cur)
    assert got == expected if expected is None else got == pytest.approx(expected)
