import numpy as np
import pytest

from ipfdyn.config import builtin_scenarios, config_from_dict, load_builtin, load_config
from ipfdyn.errors import ConfigurationError


def _write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


BASE = """\
scenario: demo
system:
  n: 2
  drift: [[1.0, 0.0], [0.0, 2.0]]
  sigma: 0.1
run:
  segments: 1
  m: 100
"""


def test_builtins_load():
    assert builtin_scenarios() == ["example3_negative", "example3_positive", "stochastic_demo"]
    for name in builtin_scenarios():
        cfg = load_builtin(name)
        assert cfg.name == name
    pos = load_builtin("example3_positive")
    np.testing.assert_array_equal(pos.system.A0, [[2, 3], [3, 10]])
    assert not pos.system.stochastic and not pos.needs_sampling
    np.testing.assert_array_equal(load_builtin("example3_negative").system.A0, -pos.system.A0)
    assert load_builtin("stochastic_demo").needs_sampling
    with pytest.raises(ConfigurationError, match="unknown scenario"):
        load_builtin("nope")


def test_missing_seed_names_file_and_line(tmp_path):
    p = _write(tmp_path, BASE)
    with pytest.raises(ConfigurationError) as ei:
        load_config(p)
    msg = str(ei.value)
    assert f"{p}:6" in msg and "run.seed" in msg and "mandatory" in msg


def test_seed_present_loads(tmp_path):
    cfg = load_config(_write(tmp_path, BASE + "  seed: 4\n"))
    assert cfg.run.seed == 4 and cfg.system.stochastic
    np.testing.assert_array_equal(cfg.system.sigma, 0.1 * np.eye(2))
    np.testing.assert_array_equal(cfg.system.init_mean, [0, 0])
    np.testing.assert_array_equal(cfg.system.init_cov, np.eye(2))
    assert cfg.to_dict()["run"]["pair"] == [0, 1]


@pytest.mark.parametrize("text,field,line", [
    (BASE + "  seed: 1\n  colour: red\n", "run.colour", 10),
    (BASE + "  seed: 1\n  detector: psychic\n", "run.detector", 10),
    (BASE + "  seed: 1\n  step: -1\n", "run.step", 10),
    (BASE.replace("segments: 1", "segments: 1.5") + "  seed: 1\n", "run.segments", 7),
    (BASE + "  seed: 1\n  pair: [0, 0]\n", "run.pair", 10),
    (BASE + "  seed: -2\n", "run.seed", 9),
])
def test_field_errors_are_located(tmp_path, text, field, line):
    p = _write(tmp_path, text)
    with pytest.raises(ConfigurationError) as ei:
        load_config(p)
    assert f"field '{field}'" in str(ei.value)
    assert f"{p}:{line}" in str(ei.value)


def test_system_errors():
    with pytest.raises(ConfigurationError, match="system.n"):
        config_from_dict({"system": {"n": 0}})
    with pytest.raises(ConfigurationError, match="expected 2x2"):
        config_from_dict({"system": {"n": 2, "A0": [[1, 2, 3]]}})
    with pytest.raises(ConfigurationError, match="either A0 or drift"):
        config_from_dict({"system": {"n": 2}})
    with pytest.raises(ConfigurationError, match="unknown field"):
        config_from_dict({"system": {"n": 1, "A0": [[1]], "mass": 3}})
    with pytest.raises(ConfigurationError, match="unknown section"):
        config_from_dict({"system": {"n": 1, "A0": [[1]]}, "extras": {}})
    with pytest.raises(ConfigurationError, match="symmetric"):
        config_from_dict({"system": {"n": 2, "A0": [[1, 0], [0, 1]],
                                     "init_cov": [[1, 1], [0, 1]]}})
    with pytest.raises(ConfigurationError, match="non-finite"):
        config_from_dict({"system": {"n": 1, "A0": [[float("nan")]]}})
    with pytest.raises(ConfigurationError, match="top level"):
        config_from_dict([1, 2])


def test_unreadable_and_invalid_yaml(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")
    with pytest.raises(ConfigurationError, match="invalid YAML"):
        load_config(_write(tmp_path, "system: [1, 2\n"))


def test_deterministic_scenario_needs_no_seed():
    cfg = config_from_dict({"system": {"n": 2, "A0": [[2, 3], [3, 10]], "x0": [1, 1]}})
    assert cfg.run.seed is None and not cfg.needs_sampling
    assert cfg.system.drift is cfg.system.A0
