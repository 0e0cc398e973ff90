import numpy as np
import pytest

from fraclab.config import load_config, parse_config, potential_values
from fraclab.exceptions import ConfigError
from fraclab.grid import build_grid, partition_domain


def _base(**over):
    raw = {
        "grid": {"n": 1, "N": 33, "Lbox": 2.0},
        "operator": {"s": 0.5},
        "domain": {"omega": {"interval": [-0.5, 0.5]}},
        "experiment": {"name": "forward", "params": {"seed": 1}},
    }
    raw.update(over)
    return raw


def test_valid_config():
    cfg = parse_config(_base())
    assert cfg.experiment.name == "forward"
    assert cfg.grid.bc == "reflecting"
    assert cfg.experiment.params.J == 256


def test_command_line_seed_overrides():
    assert parse_config(_base(), seed=99).experiment.params.seed == 99


@pytest.mark.parametrize(
    "raw, experiment",
    [
        (_base(operator={}), None),  # s missing
        (_base(operator={"s": 1.5}), None),
        (_base(grid={"n": 3, "N": 9, "Lbox": 1.0}), None),
        (_base(extra_key=1), None),
        (_base(experiment={"name": "forward"}), None),  # randomized without seed
        (_base(domain=None), None),
        (_base(), "runge"),  # name mismatch
        (_base(experiment={"name": "extension"}, operator={"s": 1.0}), None),
        (_base(experiment={"name": "frequency"}, grid={"n": 2, "N": 9, "Lbox": 1.0}), None),
        (_base(potentials={"q3": {"kind": "zero"}}), None),
        (_base(potentials={"q": {"kind": "random"}}), None),
        (_base(domain={"omega": {"triangle": 1}}), None),
        (_base(experiment={}), None),
    ],
)
def test_invalid_configs(raw, experiment):
    raw = {k: v for k, v in raw.items() if v is not None}
    with pytest.raises(ConfigError):
        parse_config(raw, experiment)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_potential_kinds():
    cfg = parse_config(_base(potentials={
        "q": {"kind": "constant", "value": 2.0},
        "q1": {"kind": "bump", "center": [0.0], "width": 0.3},
        "q2": {"kind": "random", "seed": 3, "low": 1.0, "high": 2.0},
        "q_true": {"kind": "expr", "expr": "x*x"},
    }))
    g = build_grid(1, 2.0, 33)
    p = partition_domain(g, {"interval": [-0.5, 0.5]})
    x = g.coords[p.interior, 0]
    np.testing.assert_array_equal(potential_values(cfg.potentials["q"], g, p), 2.0)
    q1 = potential_values(cfg.potentials["q1"], g, p)
    assert q1.max() == pytest.approx(1.0) and q1[np.abs(x) >= 0.3].max() == 0.0
    q2 = potential_values(cfg.potentials["q2"], g, p)
    np.testing.assert_array_equal(q2, potential_values(cfg.potentials["q2"], g, p))
    assert np.all((q2 >= 1.0) & (q2 <= 2.0))
    np.testing.assert_allclose(potential_values(cfg.potentials["q_true"], g, p), x * x)
    np.testing.assert_array_equal(potential_values(None, g, p), 0.0)
