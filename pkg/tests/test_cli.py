import json
from pathlib import Path

import pytest
import yaml

from fraclab.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def _run(exp, cfg, out, *extra):
    return main([exp, "--config", str(cfg), "--out", str(out), *extra])


def test_operator_experiment(tmp_path):
    assert _run("operator", CONFIGS / "operator.yaml", tmp_path / "o") == 0
    res = json.loads((tmp_path / "o" / "results.json").read_text())
    assert res["passed"] and res["experiment"] == "operator"
    for name in res["artifacts"]:
        assert (tmp_path / "o" / name).exists()
    meta = json.loads((tmp_path / "o" / "metadata.json").read_text())
    assert "timestamp" in meta and "timestamp" not in res


def test_results_are_byte_identical(tmp_path):
    for out in ("a", "b"):
        assert _run("dnmap", CONFIGS / "dnmap.yaml", tmp_path / out) == 0
    a = (tmp_path / "a" / "results.json").read_bytes()
    b = (tmp_path / "b" / "results.json").read_bytes()
    assert a == b


def test_dnmap_with_equal_potentials(tmp_path):
    assert _run("dnmap", CONFIGS / "dnmap.yaml", tmp_path / "d") == 0
    res = json.loads((tmp_path / "d" / "results.json").read_text())
    assert res["metrics"]["integral_identity_residual"] <= 1e-12


def test_config_error_writes_nothing(tmp_path):
    raw = yaml.safe_load((CONFIGS / "operator.yaml").read_text())
    del raw["operator"]["s"]
    out = tmp_path / "never"
    assert _run("operator", _write(tmp_path, raw), out) == 2
    assert not out.exists()


def test_seed_is_required_for_randomized_experiments(tmp_path):
    raw = yaml.safe_load((CONFIGS / "operator.yaml").read_text())
    raw["experiment"]["params"].pop("seed")
    cfg = _write(tmp_path, raw)
    assert _run("operator", cfg, tmp_path / "x") == 2
    assert _run("operator", cfg, tmp_path / "y", "--seed", "11") == 0


def test_failed_check_exit_status(tmp_path):
    raw = yaml.safe_load((CONFIGS / "runge.yaml").read_text())
    raw["domain"]["O1"] = {"box": [1.7, 1.8]}
    out = tmp_path / "r"
    assert _run("runge", _write(tmp_path, raw), out) == 1
    assert json.loads((out / "results.json").read_text())["passed"] is False


def test_numerical_failure_exit_status(tmp_path):
    raw = yaml.safe_load((CONFIGS / "frequency.yaml").read_text())
    raw["grid"]["N"] = 17
    raw["experiment"]["params"]["J"] = 16
    out = tmp_path / "f"
    assert _run("frequency", _write(tmp_path, raw), out) == 3
    res = json.loads((out / "results.json").read_text())
    assert res["passed"] is False and "error" in res


def test_bad_seed_and_experiment_rejected(tmp_path):
    with pytest.raises(SystemExit):
        _run("operator", CONFIGS / "operator.yaml", tmp_path / "z", "--seed", "-1")
    with pytest.raises(SystemExit):
        _run("unknown", CONFIGS / "operator.yaml", tmp_path / "z")
