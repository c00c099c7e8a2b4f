import json
import time
from pathlib import Path

import pytest
import yaml

from feedback_bins import cli
from feedback_bins.config import ConfigError, ExperimentConfig

ROOT = Path(__file__).resolve().parents[1]

BASIC = """
model:
  alpha: 2.0
  T0: 1
  sequence: {name: constant, sigma: 1, tau0: 2}
run:
  horizon: 100
  reps: 3
  master_seed: 7
  threads: 1
analysis:
  delta_grid: [0.1, 1.0e-6]
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_and_round_trip():
    cfg = ExperimentConfig.from_yaml(BASIC)
    assert cfg.run.bit_budget == 1_000_000 and cfg.analysis.confidence_eps == 1e-3
    again = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert again == cfg
    assert ExperimentConfig.from_yaml(again.to_yaml()).to_yaml() == again.to_yaml()


@pytest.mark.parametrize("patch,msg", [
    ({"extra": 1}, "unknown top-level"),
    ({"run": {"horizon": 10, "bogus": 1}}, "unknown keys"),
    ({"model": {"alpha": 0.5, "sequence": {"name": "constant"}}}, "alpha"),
    ({"model": {"alpha": 2, "T0": 2, "sequence": {"name": "constant", "tau0": 2}}}, "T0"),
    ({"model": {"alpha": 2, "sequence": {"name": "wat"}}}, "unknown family"),
    ({"model": {"alpha": 2, "sequence": {"name": "constant", "sigmaa": 1}}}, "unknown sequence"),
    ({"run": {"horizon": 1.5}}, "integer"),
    ({"analysis": {"confidence_eps": 2}}, "confidence_eps"),
    ({"run": {"sampler": {"cutoff": 3}}}, "unknown keys"),
])
def test_strict_schema(patch, msg):
    data = yaml.safe_load(BASIC)
    for k, v in patch.items():
        data[k] = v
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_dict(data)


def test_custom_file_relative_to_config(tmp_path):
    (tmp_path / "sig.txt").write_text("\n".join(["1"] * 30))
    p = write(tmp_path, "model:\n  alpha: 2\n  sequence: {name: custom, file: sig.txt}\n")
    cfg = ExperimentConfig.load(p)
    assert cfg.sequence().tau(30) == 32


def test_classify_exit_codes(tmp_path, capsys):
    p = write(tmp_path, BASIC)
    assert cli.main(["classify", "--config", str(p)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["monopoly"] == "almost_sure"
    p = write(tmp_path, "model:\n  alpha: 2\n  sequence: {name: custom, sigmas: [1, 2, 3, 4, 5, 6, 7, 8, 9]}\n")
    assert cli.main(["classify", "--config", str(p)]) == 2
    capsys.readouterr()
    p = write(tmp_path, "model:\n  alpha: 1\n  sequence: {name: factorial}\n")
    assert cli.main(["classify", "--config", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["dominance"] == "never"


@pytest.mark.parametrize("name,expected", [
    ("subcritical", "almost_sure"), ("critical", "strictly_between"),
])
def test_shipped_configs_classify(name, expected, capsys):
    assert cli.main(["classify", "--config", str(ROOT / "configs" / f"{name}.yaml")]) == 0
    assert json.loads(capsys.readouterr().out)["monopoly"] == expected


def test_simulate_writes_files_deterministically(tmp_path):
    p = write(tmp_path, BASIC)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["simulate", "--config", str(p), "--out", str(a), "--dump-trajectories"]) == 0
    assert cli.main(["simulate", "--config", str(p), "--out", str(b)]) == 0
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
    assert len(list((a / "trajectories").glob("rep_*.csv"))) == 3
    summary = json.loads((a / "summary.json").read_text())
    assert summary["schema"] == "v1" and summary["version"]
    assert summary["config"]["run"]["master_seed"] == 7
    assert not list(a.glob(".*.tmp"))


def test_simulate_seed_override(tmp_path):
    p = write(tmp_path, BASIC)
    cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "x"), "--seed", "8"])
    cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "y")])
    assert (tmp_path / "x" / "records.csv").read_text() != (tmp_path / "y" / "records.csv").read_text()
    s = json.loads((tmp_path / "x" / "summary.json").read_text())
    assert s["summary"]["master_seed"] == 8


def test_simulate_smoke_fast(tmp_path):
    p = write(tmp_path, BASIC.replace("reps: 3", "reps: 2"))
    start = time.perf_counter()
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    assert time.perf_counter() - start < 1.0


def test_simulate_float_switch_noted(tmp_path):
    p = write(tmp_path, "model:\n  alpha: 2\n  sequence: {name: doubly_exponential_tau, b: 2, theta0: 1}\n"
                        "run: {horizon: 25, reps: 4, threads: 1}\n")
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["summary"]["float_switch_step"] is not None


def test_simulate_partial_exit_code(tmp_path):
    p = write(tmp_path, BASIC.replace("threads: 1", "threads: 1\n  max_steps: 200"))
    assert cli.main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_errors_exit_one(tmp_path, capsys):
    assert cli.main(["classify", "--config", str(tmp_path / "missing.yaml")]) == 1
    p = write(tmp_path, "model: [1, 2]\n")
    assert cli.main(["classify", "--config", str(p)]) == 1
    assert cli.main(["verify", "no-such-theorem"]) == 1
    assert "unknown criterion" in capsys.readouterr().err


def test_verify_fast_entries(tmp_path, capsys):
    assert cli.main(["verify", "identity-1101", "classifier-table", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 2
    report = json.loads((tmp_path / "verify.json").read_text())
    assert [r["key"] for r in report] == ["identity-1101", "classifier-table"]
