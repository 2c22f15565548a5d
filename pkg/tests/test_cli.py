import json
import subprocess
import sys
from pathlib import Path

import pytest

from fenelab.cli import list_scenarios, main
from fenelab.config import KINDS, load_config

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
EXPECTED = Path(__file__).parent / "data" / "catalog_expected.txt"


def fast(name, *extra):
    """Shrunk overrides so the shipped configs run in well under a second."""
    small = {
        "fp_single": ["resolution.n_cells=16", "resolution.n_angular=8", "time.T=0.1", "time.dt=0.02"],
        "embedding": ["resolution.levels=[8, 16, 32]"],
    }
    return small.get(name, []) + list(extra)


def run_cli(tmp_path, name, *overrides):
    argv = ["run", str(CONFIGS / f"{name}.toml"), "--out-dir", str(tmp_path)]
    for o in overrides:
        argv += ["--override", o]
    return main(argv)


def test_list_matches_fixture(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out == EXPECTED.read_text().strip().splitlines()
    assert len(out) == 11
    labels = dict(line.split(": ", 1) for line in out)
    assert tuple(labels) == KINDS and all(labels.values())
    assert list_scenarios().splitlines() == out


def test_every_kind_has_a_config():
    kinds = {load_config(p).kind for p in CONFIGS.glob("*.toml")}
    assert kinds == set(KINDS)


def test_bad_b_names_field(tmp_path, capsys):
    code = run_cli(tmp_path, "fp_single", "params.b=-1")
    assert code == 2
    assert "params.b" in capsys.readouterr().err


@pytest.mark.parametrize("override,field", [("time.dt=0.3", "time.dt"), ("q.preset=bogus", "q.preset"),
                                            ("resolution.n_angular=7", "resolution.n_angular"),
                                            ("kind=nope", "kind")])
def test_config_errors(tmp_path, capsys, override, field):
    assert run_cli(tmp_path, "fp_single", override) == 2
    assert field in capsys.readouterr().err


def test_missing_file_and_threads(tmp_path, capsys):
    assert main(["run", str(tmp_path / "none.toml")]) == 2
    assert main(["run", str(CONFIGS / "fp_single.toml"), "--threads", "0"]) == 2


def test_fp_single_passes(tmp_path, capsys):
    assert run_cli(tmp_path, "fp_single", *fast("fp_single")) == 0
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["passed"] is True
    drift = next(c for c in summ["checks"] if c["name"] == "mass_drift")
    assert drift["value"] <= 1e-6 and drift["margin"] > 0
    assert all({"name", "value", "bound", "margin", "passed"} <= set(c) for c in summ["checks"])
    assert (tmp_path / "diagnostics.csv").exists() and (tmp_path / "trajectory.csv").exists()


def test_embedding_b2_passes(tmp_path, capsys):
    assert run_cli(tmp_path, "embedding", *fast("embedding", "params.b=2")) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["passed"]
    assert (tmp_path / "embedding.csv").exists()


def test_failed_check_exit_one(tmp_path, capsys):
    # an impossible tolerance turns the mass check red
    assert run_cli(tmp_path, "fp_single", *fast("fp_single", "options.mass_tol=-1")) == 1
    assert "FAIL mass_drift" in capsys.readouterr().out


def test_solver_error_exit_three(tmp_path, capsys):
    code = run_cli(tmp_path, "coupled", "options.amplitude=500", "time.T=0.004", "options.mode=splitting")
    assert code == 3
    assert "CFLViolation" in capsys.readouterr().err


def test_rerun_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run_cli(d, "fp_single", *fast("fp_single")) == 0
    for name in ("diagnostics.csv", "trajectory.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_override_changes_run(tmp_path, capsys):
    run_cli(tmp_path, "fp_single", *fast("fp_single", "params.b=2"))
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["config"]["params"]["b"] == 2.0
    assert summ["config"]["resolution"]["n_cells"] == 16


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "fenelab.cli", "list"], capture_output=True, text=True, check=True)
    assert out.stdout.strip().splitlines() == EXPECTED.read_text().strip().splitlines()
