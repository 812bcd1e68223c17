import json
import subprocess
import sys

import pytest

from emhd_cascade.cli import (DEFAULTS, apply_override, diff_runs, main, read_config,
                              resolve_config)
from emhd_cascade.errors import ConfigurationError, SchemaMismatchError

FAST = ["--plots", "off", "--override", "cascade.n=20", "--override", "numerics.per_decade=5",
        "--override", "cascade.t_min_abs=1e-7", "--override", "cascade.fit_window=[1e-6,1e-2]"]


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_root_mode(tmp_path, capsys):
    assert main(["--mode", "root", "--out", str(tmp_path), "--override", "root.A=3"]) == 0
    m = _manifest(tmp_path)
    assert m["status"] == 0 and "root.json" in m["artifacts"]
    assert "a = 2.82143937" in capsys.readouterr().out


def test_selftest_mode(tmp_path):
    assert main(["--mode", "hilbert-selftest", "--out", str(tmp_path)]) == 0
    assert all(v["pass"] for v in _manifest(tmp_path)["monitors"].values())


def test_cascade_mode_and_identical_diff(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--mode", "cascade", "--out", str(a)] + FAST) == 0
    assert main(["--mode", "cascade", "--out", str(b)] + FAST) == 0
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    rep = diff_runs(a / "manifest.json", b / "manifest.json")
    assert rep["identical"] and rep["within_tolerance"]


def test_diff_reports_config_change(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["--mode", "cascade", "--out", str(a)] + FAST)
    main(["--mode", "cascade", "--out", str(b), "--override", "params.A=3"] + FAST)
    rep = diff_runs(a / "manifest.json", b / "manifest.json")
    assert "params.A" in rep["config_changes"]
    assert not rep["identical"]
    assert main(["--diff", str(a / "manifest.json"), str(b / "manifest.json")]) == 2


def test_diff_mode_mismatch(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["--mode", "root", "--out", str(a)])
    main(["--mode", "hilbert-selftest", "--out", str(b)])
    with pytest.raises(SchemaMismatchError):
        diff_runs(a / "manifest.json", b / "manifest.json")
    assert main(["--diff", str(a / "manifest.json"), str(b / "manifest.json")]) == 3


def test_config_error_exit_code(tmp_path):
    assert main(["--mode", "cascade", "--out", str(tmp_path), "--override", "params.A=1.0"]) == 3
    assert "ConfigurationError" in _manifest(tmp_path)["error"]
    assert main(["--override", "params.nope=1", "--out", str(tmp_path)]) == 3
    assert main(["--seed-profile", "s=0.1", "--out", str(tmp_path)]) == 3


def test_toml_config(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('mode = "root"\n[root]\nA = 1.5\n[output]\nplots = false\n')
    assert read_config(cfg)["root"]["A"] == 1.5
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "root.json").read_text())["A"] == 1.5


def test_unknown_config_section(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"paramz": {}}))
    assert main(["--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_resolution_helpers():
    cfg = resolve_config(None, "cascade", ["params.A=2.5", "cascade.fit_window=[1e-4,1e-2]"],
                         seed_profile="r=0.07")
    assert cfg["params"]["A"] == 2.5 and cfg["params"]["r"] == 0.07
    assert cfg["cascade"]["fit_window"] == [1e-4, 1e-2]
    assert DEFAULTS["params"]["A"] == 2.0  # defaults untouched
    with pytest.raises(ConfigurationError):
        apply_override(cfg, "params.A")


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "emhd_cascade.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "--seed-profile" in out.stdout
