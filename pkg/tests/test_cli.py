import json
import subprocess
import sys

import pytest

from nullcauchy.cli import main
from nullcauchy.scenarios import SCENARIOS, config_hash, validate_config


def write(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert len(SCENARIOS) >= 5
    for name in SCENARIOS:
        assert f"{name}:" in out
    brink = out.split("brinkmann:")[1].split("warped_product:")[0]
    assert "eps (float, default 0.1)" in brink


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_every_scenario_validates_with_defaults(name, tmp_path, capsys):
    assert main(["validate", write(tmp_path, {"scenario": name})]) == 0
    shown = capsys.readouterr().out
    cfg = json.loads(shown[: shown.rindex("}") + 1])
    assert validate_config(cfg) == cfg


@pytest.mark.parametrize("cfg", [
    {"scenario": "nope"},
    {"scenario": "minkowski", "bogus": 1},
    {"scenario": "minkowski", "N": "16"},
    {"scenario": "minkowski", "N": 4},
    {"scenario": "brinkmann", "family": "sphere"},
    {"scenario": "brinkmann", "cfl": 1.5},
    {"scenario": "brinkmann", "residuals": ["nablaV", "bogus"]},
    ["not", "an", "object"],
])
def test_config_errors_exit_2(cfg, tmp_path, capsys):
    assert main(["validate", write(tmp_path, cfg)]) == 2
    assert "config error" in capsys.readouterr().err


def test_unreadable_configs_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["run", write(tmp_path, {"scenario": "minkowski"}), "--set", "novalue"]) == 2


def test_overrides(tmp_path, capsys):
    p = write(tmp_path, {"scenario": "brinkmann"})
    assert main(["validate", p, "--set", "eps=0.2", "--set", "data=exact", "--set", "residuals=[\"E\"]"]) == 0
    out = capsys.readouterr().out
    cfg = json.loads(out[: out.rindex("}") + 1])
    assert cfg["eps"] == 0.2 and cfg["data"] == "exact" and cfg["residuals"] == ["E"]


def test_config_hash_is_git_blob_hash():
    cfg = validate_config({"scenario": "minkowski"})
    body = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    git = subprocess.run(["git", "hash-object", "--stdin"], input=body, capture_output=True, text=True)
    if git.returncode:
        pytest.skip("git not available")
    assert config_hash(cfg) == git.stdout.strip()


def small_minkowski(tmp_path, out, **kw):
    cfg = {"scenario": "minkowski", "N": 8, "steps": 3, "out": str(tmp_path / out)}
    cfg.update(kw)
    return write(tmp_path, cfg, out + ".json")


def test_run_writes_artifacts_deterministically(tmp_path):
    assert main(["run", small_minkowski(tmp_path, "a", checkpoint_every=2)]) == 0
    assert main(["run", small_minkowski(tmp_path, "b", checkpoint_every=2)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()
    assert sorted(p.name for p in a.iterdir()) == ["diagnostics.csv", "report.json", "state_2.bin", "state_3.bin"]
    rep = json.loads((a / "report.json").read_text())
    assert rep["config_hash"] == config_hash(rep["config"]) and rep["all_checks_pass"]
    assert len((a / "diagnostics.csv").read_text().splitlines()) == 5


def test_selftest_failure_exits_4(tmp_path):
    assert main(["run", small_minkowski(tmp_path, "c", tol=1e-300, selftest=True)]) == 4
    assert main(["run", small_minkowski(tmp_path, "d", tol=1e-300)]) == 0


def test_admissibility_failure_exits_3(tmp_path, capsys):
    assert main(["run", small_minkowski(tmp_path, "e", lamdot=-5.0, steps=20)]) == 3
    assert "admissibility" in capsys.readouterr().err
    rep = json.loads((tmp_path / "e" / "report.json").read_text())
    assert rep["status"] == "inadmissible"


def test_out_flag_and_module_entry(tmp_path):
    cfg = small_minkowski(tmp_path, "f")
    r = subprocess.run([sys.executable, "-m", "nullcauchy", "run", cfg, "--out", str(tmp_path / "g")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "g" / "report.json").exists() and not (tmp_path / "f").exists()


def test_flow_demo_reports_checks(tmp_path):
    p = write(tmp_path, {"scenario": "flow_demo", "instances": 10, "generic": 2, "out": str(tmp_path / "fd"),
                         "selftest": True})
    assert main(["run", p]) == 0
    header = (tmp_path / "fd" / "diagnostics.csv").read_text().splitlines()[0]
    assert header == "check,value,threshold,pass"
