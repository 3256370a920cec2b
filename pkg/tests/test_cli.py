import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from leelab import cli
from leelab.fixtures import reference_dict
from leelab.validation import CheckReport

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("LEELAB_"):
            monkeypatch.delenv(key)


def _config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _small(manifold="sphere2", n=1, **overrides):
    data = reference_dict(manifold, n, truncation__sigma_max=12.0, truncation__sigma_max_k1=40.0)
    for key, value in overrides.items():
        section, _, field = key.partition("__")
        data.setdefault(section, {})[field] = value
    return data


def test_spectrum_writes_mode_and_basis_tables(tmp_path):
    cfg = _config(tmp_path, _small(truncation__sigma_max=6.0))
    assert cli.main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    modes = _rows(tmp_path / "o" / "modes.csv")
    assert modes[0][:2] == ["id", "sigma (1/length^2)"]
    assert len(modes) - 1 == 9
    assert len(_rows(tmp_path / "o" / "basis.csv")) - 1 == 9  # n = 1: one state per mode


def test_spectrum_respects_environment_override(tmp_path, monkeypatch):
    cfg = _config(tmp_path, reference_dict("torus2", 1))
    monkeypatch.setenv("LEELAB_TRUNCATION__SIGMA_MAX", "4.5")
    assert cli.main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert len(_rows(tmp_path / "o" / "modes.csv")) - 1 == 13


def test_ground_matches_golden_and_is_deterministic(tmp_path):
    golden = json.loads((FIXTURES / "torus2_n1_golden.json").read_text())
    cfg = str(FIXTURES / golden["config"])
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert cli.main(["ground", "--config", cfg, "--out", str(out)]) == 0
    result = json.loads((outs[0] / "ground.json").read_text())
    tol = golden["tolerances"]
    assert result["E_gr"] == pytest.approx(golden["E_gr"], abs=tol["E_gr"])
    assert result["norms"] == pytest.approx(golden["norms"], abs=tol["norms"])
    assert result["norm_sum"] == pytest.approx(1.0, abs=1e-12)
    assert result["E_gr"] < result["threshold"] and result["gap"] > 0
    assert all(sec["passed"] for sec in result["positivity"].values())
    for name in ("ground.json", "wavefunction_n.csv", "wavefunction_np1.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    wf = _rows(outs[0] / "wavefunction_np1.csv")
    assert wf[0] == ["x1 (length)", "y1 (length)", "x2 (length)", "y2 (length)", "value"]
    assert len(wf) - 1 == 256


def test_energy_sweep_is_monotone_and_independent_of_jobs(tmp_path):
    cfg = _config(tmp_path, _small(solver__E_grid={"start": 0.0, "stop": 1.5, "points": 7}))
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s1")]) == 0
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "s4"), "--jobs", "4"]) == 0
    a, b = (tmp_path / "s1" / "sweep.csv").read_bytes(), (tmp_path / "s4" / "sweep.csv").read_bytes()
    assert a == b
    rows = _rows(tmp_path / "s1" / "sweep.csv")
    assert rows[0][:3] == ["parameter", "value (m)", "omega0 (m)"]
    omega = [float(r[2]) for r in rows[1:]]
    assert len(omega) == 7 and all(x > y for x, y in zip(omega, omega[1:]))


def test_lambda_and_cutoff_sweeps(tmp_path):
    cfg = _config(tmp_path, _small(sweep__parameter="lambda", sweep__values=[0.5, 1.0, 2.0]))
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "l")]) == 0
    rows = _rows(tmp_path / "l" / "sweep.csv")[1:]
    E_gr = [float(r[-1]) for r in rows]
    assert all(x > y for x, y in zip(E_gr, E_gr[1:]))  # stronger coupling binds deeper

    cfg = _config(tmp_path, _small(sweep__parameter="cutoff", sweep__values=[3.0, 6.0, 12.0]), "cut.json")
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
    rows = _rows(tmp_path / "c" / "sweep.csv")
    assert rows[0][-1] == "delta_E_gr (m)" and rows[1][-1] == ""
    assert [int(r[2]) for r in rows[1:]] == sorted(int(r[2]) for r in rows[1:])


def test_validate_writes_bundle(tmp_path, capsys):
    cfg = _config(tmp_path, _small())
    out = tmp_path / "v"
    assert cli.main(["validate", "--config", cfg, "--out", str(out), "--check", "normalization", "--check", "nondegeneracy"]) == 0
    bundle = json.loads((out / "validation.json").read_text())
    assert bundle["passed"] is True
    assert [c["name"] for c in bundle["checks"]] == ["normalization", "nondegeneracy"]
    assert bundle["config"]["params"]["lambda"] == 1.0
    assert (out / "check_nondegeneracy.csv").exists()
    assert "PASS  nondegeneracy" in capsys.readouterr().out


def test_failed_check_gives_exit_code_one(tmp_path, monkeypatch):
    # the CLI shares the check registry with the validation module
    monkeypatch.setitem(cli.CHECKS, "always_red", lambda ctx: CheckReport("always_red", False))
    cfg = _config(tmp_path, _small())
    assert cli.main(["validate", "--config", cfg, "--out", str(tmp_path / "v"), "--check", "always_red"]) == 1
    assert json.loads((tmp_path / "v" / "validation.json").read_text())["passed"] is False


@pytest.mark.parametrize(
    "data,argv_extra,code,category",
    [
        ({"manifold": {"kind": "torus2"}}, [], 2, "configuration"),
        (None, ["--check", "nope"], 2, "configuration"),
        (None, ["--jobs", "0"], 2, "configuration"),
    ],
)
def test_configuration_errors_exit_two(tmp_path, capsys, data, argv_extra, code, category):
    cfg = _config(tmp_path, data if data is not None else _small())
    assert cli.main(["validate", "--config", cfg, "--out", str(tmp_path / "o"), *argv_extra]) == code
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == category and err["message"]


def test_missing_config_file_exits_two(tmp_path, capsys):
    assert cli.main(["ground", "--config", str(tmp_path / "nope.json")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "configuration"


def test_search_floor_exits_three(tmp_path, capsys):
    cfg = _config(tmp_path, _small(solver__floor=1.45))
    assert cli.main(["ground", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "search_floor" and "1.45" in err["message"]


def test_module_entry_point_runs(tmp_path):
    cfg = _config(tmp_path, _small(truncation__sigma_max=2.0))
    proc = subprocess.run(
        [sys.executable, "-m", "leelab.cli", "spectrum", "--config", cfg, "--out", str(tmp_path / "o")],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert "modes" in proc.stdout
