import json
import subprocess
import sys

import pytest

from noisyrisk import __version__
from noisyrisk.cli import main


def run(tmp_path, *argv, out="out"):
    return main(["run", *argv, "--output-dir", str(tmp_path / out)])


def test_missing_required_flag_is_usage_error(tmp_path, capsys):
    assert run(tmp_path, "approx", "--d", "1") == 1
    assert "missing required parameter --k" in capsys.readouterr().err


def test_unknown_flag_and_subcommand(tmp_path):
    assert run(tmp_path, "approx", "--d", "1", "--k", "1", "--bogus", "3") == 1
    assert main(["run", "nothing"]) == 1
    assert main([]) == 1


def test_bad_value_is_usage_error(tmp_path):
    assert run(tmp_path, "approx", "--d", "one", "--k", "1") == 1
    assert run(tmp_path, "noise-tolerance", "--loss", "l1", "--K", "3", "--eta", "0.5") == 1


def test_unknown_config_parameter(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"parameters": {"d": 1, "k": 1, "wat": 2}}))
    assert run(tmp_path, "approx", "--config", str(cfg)) == 1
    cfg.write_text(json.dumps({"seeds": 1}))
    assert run(tmp_path, "approx", "--config", str(cfg), "--d", "1", "--k", "1") == 1


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "mixing-beta", "seed": 4,
                               "parameters": {"chain": {"kind": "two_state", "stay": 0.9}, "max_lag": 50}}))
    assert run(tmp_path, "mixing-beta", "--config", str(cfg), "--max_lag", "5") == 0
    doc = json.loads((tmp_path / "out" / "mixing-beta.json").read_text())
    assert doc["config"]["parameters"]["max_lag"] == 5
    assert doc["seed"] == 4 and doc["passed"] is True
    assert doc["tool"] == "noisyrisk" and doc["version"] == __version__
    rows = (tmp_path / "out" / "mixing-beta.csv").read_text().splitlines()
    assert len(rows) == 6
    assert "PASS mixing-beta" in capsys.readouterr().out


def test_approx_run_passes(tmp_path):
    assert run(tmp_path, "approx", "--d", "1", "--k", "2", "--target", "sin-product",
               "--mc_samples", "2000") == 0
    text = (tmp_path / "out" / "approx.csv").read_text()
    assert text.count("\n") == 3


def test_noise_tolerance_run(tmp_path):
    assert run(tmp_path, "noise-tolerance", "--loss", "l1", "--K", "3", "--eta", "0.25",
               "--instances", "10") == 0


def test_rerun_is_byte_identical(tmp_path):
    argv = ["mixing-swap", "--a_n", "1,2", "--trials", "500", "--seed", "9"]
    assert run(tmp_path, *argv, out="a") == 0
    assert run(tmp_path, *argv, out="b") == 0
    assert (tmp_path / "a" / "mixing-swap.csv").read_bytes() == (tmp_path / "b" / "mixing-swap.csv").read_bytes()
    ja = json.loads((tmp_path / "a" / "mixing-swap.json").read_text())
    jb = json.loads((tmp_path / "b" / "mixing-swap.json").read_text())
    assert ja["results"] == jb["results"]


@pytest.mark.parametrize("sub, argv", [
    ("loss-audit", ["--K", "2,3", "--trials", "500"]),
    ("rademacher", ["--trials", "3", "--steps", "20", "--restarts", "1"]),
    ("excess-risk", ["--n_grid", "32", "--a_grid", "1", "--eta_grid", "0,0.2", "--max_steps", "20",
                     "--restarts", "1", "--width", "4", "--approx_max_k", "1"]),
])
def test_other_subcommands_run(tmp_path, sub, argv):
    assert run(tmp_path, sub, *argv) == 0
    assert (tmp_path / "out" / f"{sub}.csv").exists()


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "noisyrisk", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
