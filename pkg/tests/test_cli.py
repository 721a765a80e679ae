import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from ahmsim.cli import main, schema_errors
from ahmsim.experiments import DEFAULTS, EXPERIMENTS, REGISTRY, resolve

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_shipped_configs_are_valid():
    names = set()
    for f in sorted(CONFIGS.glob("*.json")):
        cfg = json.loads(f.read_text())
        assert schema_errors(cfg) == [], f.name
        assert schema_errors(resolve(cfg)) == [], f.name
        names.add(cfg["experiment"])
    assert names == set(EXPERIMENTS)


def test_defaults_cover_registry():
    assert set(DEFAULTS) == set(EXPERIMENTS)
    assert all(e.reproduces for e in REGISTRY)


def test_schema_error_exit_code(tmp_path, capsys):
    path = write_cfg(tmp_path, {"experiment": "digital-trotter", "trotter": {"dt": -1}})
    assert main(["run", path, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("schema error: trotter/dt")


def test_unknown_key_rejected(tmp_path, capsys):
    path = write_cfg(tmp_path, {"experiment": "resources", "colour": "blue"})
    assert main(["validate", path]) == 2
    assert "colour" in capsys.readouterr().err


def test_unknown_experiment(tmp_path):
    assert main(["run", "no-such-thing", "--out", str(tmp_path)]) == 2
    assert main(["run", write_cfg(tmp_path, {"experiment": "nope"})]) == 2


def test_bad_initial_state_length(tmp_path):
    path = write_cfg(tmp_path, {"experiment": "digital-trotter", "initial_state": "|2>"})
    assert main(["validate", path]) == 2


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [l.split()[0] for l in lines] == list(EXPERIMENTS)
    assert main(["list-experiments", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [d["name"] for d in data] == list(EXPERIMENTS)
    assert set(data[0]) == {"name", "description", "reproduces"}


def test_validate_diagnostics(tmp_path, capsys):
    assert main(["validate", str(CONFIGS / "digital-trotter.json")]) == 0
    assert json.loads(capsys.readouterr().out) == []
    assert main(["validate", "string-breaking", "--sites", "20"]) == 3
    diags = json.loads(capsys.readouterr().out)
    assert diags[0]["kind"] == "CapacityError"
    path = write_cfg(tmp_path, {"experiment": "single-analog", "model": {"scale_freq_hz": 40e6}})
    assert main(["validate", path]) == 0
    diags = json.loads(capsys.readouterr().out)
    assert [d["kind"] for d in diags] == ["RWA"]


def test_run_over_capacity_is_numerical_error(tmp_path, capsys):
    assert main(["run", "string-breaking", "--sites", "20", "--out", str(tmp_path)]) == 3
    assert "CapacityError" in capsys.readouterr().err


def test_run_is_byte_reproducible(tmp_path):
    cfg = json.loads((CONFIGS / "digital-trotter.json").read_text())
    cfg["trotter"]["n_steps"] = 4
    cfg["noise"] = {"depolarizing_lambda": 0.95, "overrotation_angle": 0.01}
    cfg["mitigation"] = {"n_twirls": 3, "shots": 256}
    path = write_cfg(tmp_path, cfg)
    for d in ("a", "b"):
        assert main(["run", path, "--seed", "7", "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "data.csv").read_bytes()
    assert a == (tmp_path / "b" / "data.csv").read_bytes()
    assert main(["run", path, "--seed", "8", "--out", str(tmp_path / "c")]) == 0
    assert a != (tmp_path / "c" / "data.csv").read_bytes()
    resolved = json.loads((tmp_path / "a" / "resolved_config.json").read_text())
    assert resolved["seed"] == 7 and resolved["trotter"]["n_steps"] == 4


def test_run_outputs_long_format(tmp_path):
    assert main(["run", "digital-trotter", "--steps", "5", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "data.csv")
    assert list(rows[0]) == ["experiment", "series", "site", "time_model", "time_physical_s", "value", "stderr"]
    assert {r["series"] for r in rows} == {"lz_trotter", "lz_exact", "lz2_trotter", "lz2_exact", "q_trotter", "q_exact"}
    for r in rows:
        assert math.isfinite(float(r["value"]))
        assert r["time_physical_s"] == ""  # digital runs have no physical clock
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_rows"] == len(rows) and report["schema_version"] == "1"


def test_resources_report(tmp_path):
    assert main(["run", str(CONFIGS / "resources.json"), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "report.json").read_text())["resources"]
    assert (res["qutrit_entangling"], res["qubit_cnot_all_to_all"], res["qubit_cnot_heavy_hex"]) == (3, 16, 34)


@pytest.mark.parametrize("name", ["calibrate", "two-analog-digital", "single-analog"])
def test_device_experiments_run(tmp_path, name):
    assert main(["run", str(CONFIGS / f"{name}.json"), "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "data.csv")
    assert rows and all(math.isfinite(float(r["value"])) for r in rows)


def test_env_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("AHMSIM_OUT", str(tmp_path))
    assert main(["run", "resources"]) == 0
    assert (tmp_path / "resources" / "data.csv").is_file()


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ahmsim.cli", "list-experiments"], capture_output=True, text=True)
    assert out.returncode == 0 and "string-breaking" in out.stdout
