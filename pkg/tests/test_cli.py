import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from pnpsteric import cli, experiments, model, scheme
from pnpsteric.errors import SolverError
from pnpsteric.io import read_timeseries

ONE_CELL = """
[model]
sigma = 1.0
z = [1.0, -1.0]
a = [[1.0, 0.2], [0.2, 1.0]]
[grid]
dim = 1
nx = 1
[boundary]
left = "dirichlet"
left_value = 0.3
[initial]
kind = "constants"
values = [0.7, 1.4]
[run]
dt = 0.1
n_steps = 10
snapshot_steps = [0, 10]
"""

NEUMANN_1D = """
[model]
sigma = 1.0
z = [1.0, -1.0]
a = [[1.0, 0.0], [0.0, 1.0]]
[grid]
dim = 1
nx = 16
[initial]
kind = "{kind}"
{initial}
[run]
dt = 0.002
n_steps = 30
"""


def cfg_file(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def test_presets_lists_names(capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("paper-sec5", "decay-1d", "wsu-1d"):
        assert name in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pnpsteric", "presets"], capture_output=True, text=True)
    assert res.returncode == 0 and "paper-sec5" in res.stdout


def test_simulate_rejects_zero_dt(tmp_path):
    path = cfg_file(tmp_path, ONE_CELL.replace("dt = 0.1", "dt = 0.0"))
    assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 1


def test_simulate_one_cell_constant_diagnostics(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", cfg_file(tmp_path, ONE_CELL), "--out", str(out)]) == 0
    ts = read_timeseries(out / "timeseries.csv")
    assert len(ts["step"]) == 11
    for key in ("H_BR", "H_R", "mass_1", "mass_2", "u_min", "u_max", "phi_min", "phi_max"):
        assert np.allclose(ts[key], ts[key][0], rtol=1e-12, atol=1e-14), key
    assert np.all(ts["production"] == 0.0)
    assert sorted(p.name for p in out.glob("snapshot_*.csv")) == ["snapshot_000000.csv", "snapshot_000010.csv"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["invariants"]["violations"] == []


def test_outputs_are_deterministic(tmp_path):
    text = NEUMANN_1D.format(kind="gaussian", initial="centers = [[0.3], [0.7]]\nwidth = 50.0\n"
                                                       "amplitude = 0.5\noffset = 1.0")
    path = cfg_file(tmp_path, text.replace("n_steps = 30", "n_steps = 5\nsnapshot_steps = [5]"))
    for d in ("a", "b"):
        assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / d), "--vtk"]) == 0
    for name in ("timeseries.csv", "snapshot_000005.csv", "snapshot_000005.vtk", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise SolverError("injected")

    monkeypatch.setattr(scheme, "_advance", broken)
    path = cfg_file(tmp_path, ONE_CELL)
    assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert (tmp_path / "o" / "timeseries.csv").exists()


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(experiments, "MASS_TOL", -1.0)
    path = cfg_file(tmp_path, ONE_CELL)
    assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 3


def test_decay_preset(tmp_path):
    out = tmp_path / "d"
    assert cli.main(["decay", "--preset", "decay-1d", "--out", str(out)]) == 0
    report = json.loads((out / "decay_report.json").read_text())
    assert report["lambda_fit"] > 0 and report["r_squared"] >= 0.99
    for key in ("lambda_theory", "theory_terms", "C_P", "C_L"):
        assert key in report


def test_decay_already_equilibrated(tmp_path, capsys):
    path = cfg_file(tmp_path, NEUMANN_1D.format(kind="constants", initial="values = [1.0, 1.0]"))
    assert cli.main(["decay", "--config", path, "--out", str(tmp_path / "d")]) == 0
    assert "already equilibrated" in capsys.readouterr().out


def test_decay_rejects_charged_data(tmp_path):
    path = cfg_file(tmp_path, NEUMANN_1D.format(kind="constants", initial="values = [1.0, 2.0]"))
    assert cli.main(["decay", "--config", path, "--out", str(tmp_path / "d")]) == 1


def test_decay_rejects_mixed_boundary(tmp_path):
    text = NEUMANN_1D.format(kind="constants", initial="values = [1.0, 1.0]")
    text = text.replace("[initial]", '[boundary]\nleft = "dirichlet"\n[initial]')
    assert cli.main(["decay", "--config", cfg_file(tmp_path, text), "--out", str(tmp_path / "d")]) == 1


def test_wsu_degenerate_is_zero(tmp_path):
    out = tmp_path / "w"
    assert cli.main(["wsu", "--preset", "wsu-1d", "--refinements", "0", "--out", str(out)]) == 0
    report = json.loads((out / "wsu_report.json").read_text())
    assert report["levels"][0]["e"] <= 1e-20  # quadratic in solver-tolerance differences
    assert report["final_time"] == pytest.approx(0.04)


def test_selfcheck_passes(capsys):
    assert cli.main(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out


def test_selfcheck_catches_steric_sign_error(monkeypatch, capsys):
    real = model.steric_potential
    monkeypatch.setattr(model, "steric_potential", lambda params, u: -real(params, u))
    assert cli.main(["selfcheck"]) == 3
    assert "FAIL steric reference" in capsys.readouterr().out


@pytest.mark.slow
def test_simulate_three_species_preset_files(tmp_path):
    out = tmp_path / "s5"
    assert cli.main(["simulate", "--preset", "paper-sec5", "--out", str(out)]) == 0
    assert len(list(out.glob("snapshot_*.csv"))) == 3
    assert len(list(out.glob("timeseries*.csv"))) == 1
    assert len((out / "snapshot_000380.csv").read_text().splitlines()) == 401
