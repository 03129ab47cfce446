"""Tests for configuration management."""

import json
import pytest
import toml
import numpy as np
from stable_width.config import (
    BUILTIN_DEFAULTS,
    THREADS_ENV,
    Config,
    load_experiment,
    parse_experiment,
    resolve_threads,
)
from stable_width.exceptions import ConfigError

def test_config_initialization(temp_home):
    """Test config initialization."""
    config = Config()
    assert config.config_dir == temp_home / ".stable_width"
    assert config.config_file == temp_home / ".stable_width" / "config.toml"
    assert config._config == {}

def test_config_load_nonexistent(temp_home):
    """Test loading config when file doesn't exist."""
    config = Config()
    config.load()
    assert config._config == {}
    assert config.defaults == {}

def test_config_save_and_load(temp_config):
    """Test saving and loading config."""
    config = Config()
    config._config = {"defaults": {"threads": 4, "out_dir": "runs"}}
    config._save_config()

    # Load in a new instance
    new_config = Config()
    assert new_config._config == {"defaults": {"threads": 4, "out_dir": "runs"}}

def test_config_load_invalid(temp_config):
    """A broken TOML file raises ConfigError."""
    (temp_config / "config.toml").write_text("defaults = [unclosed")
    with pytest.raises(ConfigError, match="Failed to load config file"):
        Config()

def test_set_default_converts(temp_home):
    """Values from the command line are converted to the key's type."""
    config = Config()
    assert config.set_default("threads", "8") == 8
    assert config.set_default("tolerance", "0.05") == 0.05
    stored = toml.load(config.config_file)
    assert stored["defaults"] == {"threads": 8, "tolerance": 0.05}

def test_set_default_rejects_unknown_and_bad_values(temp_home):
    """Unknown keys and unconvertible values are configuration errors."""
    config = Config()
    with pytest.raises(ConfigError, match="unknown default"):
        config.set_default("colour", "blue")
    with pytest.raises(ConfigError, match="defaults.threads"):
        config.set_default("threads", "many")
    with pytest.raises(ConfigError, match=">= 1"):
        config.set_default("replicates", 0)

def test_get_and_remove_default(temp_home):
    """User defaults shadow built-in ones until removed."""
    config = Config()
    assert config.get_default("mc_size") == BUILTIN_DEFAULTS["mc_size"]
    config.set_default("mc_size", 5000)
    assert Config().get_default("mc_size") == 5000
    assert config.remove_default("mc_size") is True
    assert config.remove_default("mc_size") is False
    assert Config().get_default("mc_size") == BUILTIN_DEFAULTS["mc_size"]

def test_resolve_threads_precedence(temp_home, monkeypatch):
    """Flag, then environment, then user default, then 1."""
    monkeypatch.delenv(THREADS_ENV, raising=False)
    config = Config()
    assert resolve_threads(None, config) == 1
    config.set_default("threads", 3)
    assert resolve_threads(None, config) == 3
    monkeypatch.setenv(THREADS_ENV, "5")
    assert resolve_threads(None, config) == 5
    assert resolve_threads(2, config) == 2

def test_resolve_threads_invalid(temp_home, monkeypatch):
    """Non-integer or non-positive thread counts are rejected."""
    monkeypatch.setenv(THREADS_ENV, "lots")
    with pytest.raises(ConfigError, match=THREADS_ENV):
        resolve_threads()
    with pytest.raises(ConfigError, match="--threads"):
        resolve_threads(0)

def test_parse_experiment(experiment):
    """A valid document yields typed fields."""
    exp = parse_experiment(experiment)
    assert exp.seed == 7
    assert exp.network.depth == 1
    assert exp.k == 1
    np.testing.assert_array_equal(exp.inputs, [[1.0, 0.5]])
    assert exp.widths == [20, 40]
    assert exp.prefix == "experiment"
    assert exp.counterexample is None

def test_unknown_key_rejected(experiment):
    """Typos are caught and the message names the path."""
    experiment["network"]["layers"][0]["sigma_bais"] = 1.0
    with pytest.raises(ConfigError, match=r"data\.network\.layers\[0\]"):
        parse_experiment(experiment)

def test_seed_required(experiment):
    """There is no default seed."""
    del experiment["seed"]
    with pytest.raises(ConfigError, match="seed"):
        parse_experiment(experiment)

@pytest.mark.parametrize("alpha", [0.0, 2.5])
def test_alpha_out_of_range(experiment, alpha):
    """Layer alpha must lie in (0, 2]."""
    experiment["network"]["layers"][1]["alpha"] = alpha
    with pytest.raises(ConfigError, match=r"data\.network\.layers\[1\]\.alpha"):
        parse_experiment(experiment)

def test_schema_version(experiment):
    """Only version 1 is understood."""
    experiment["schema_version"] = 2
    with pytest.raises(ConfigError, match="schema_version"):
        parse_experiment(experiment)

def test_widths_must_increase(experiment):
    """A non-increasing width sequence is a configuration error."""
    experiment["widths"] = [40, 20]
    with pytest.raises(ConfigError, match=r"data\.widths\[1\].*increase"):
        parse_experiment(experiment)

def test_width_too_small(experiment):
    """Widths below 2 fail the schema."""
    experiment["widths"] = [1, 20]
    with pytest.raises(ConfigError, match=r"data\.widths"):
        parse_experiment(experiment)

def test_input_dimension_mismatch(experiment):
    """Inputs must live in R^input_dim."""
    experiment["inputs"] = [[1.0, 0.5, 0.0]]
    with pytest.raises(ConfigError, match=r"data\.inputs"):
        parse_experiment(experiment)

def test_depth_mismatch(experiment):
    """The declared depth must match the layer list."""
    experiment["network"]["depth"] = 2
    with pytest.raises(ConfigError, match=r"data\.network"):
        parse_experiment(experiment)

def test_relu_with_pareto_rejected(experiment):
    """Unbounded activations with regularly varying weights are refused."""
    experiment["network"]["activation"] = "relu"
    with pytest.raises(ConfigError, match="counterexample"):
        parse_experiment(experiment)

def test_counterexample_only_document():
    """A counterexample block stands in for the network."""
    exp = parse_experiment({"schema_version": 1, "seed": 3, "counterexample": {"alpha": 1.2, "widths": [10, 20]}})
    assert exp.counterexample.alpha == 1.2
    assert exp.counterexample.seed == 3
    assert exp.network.activation.kind == "relu"

def test_missing_network():
    """Without network or counterexample there is nothing to run."""
    with pytest.raises(ConfigError, match="network"):
        parse_experiment({"schema_version": 1, "seed": 3})

def test_with_seed(experiment):
    """Overriding the seed updates the hashed document too."""
    exp = parse_experiment(experiment).with_seed(99)
    assert exp.seed == 99
    assert exp.raw["seed"] == 99
    with pytest.raises(ConfigError):
        exp.with_seed(-1)

def test_sweep_points(experiment):
    """The grid expands to every combination with its own network."""
    experiment["sweep"] = {"alpha": [1.0, 1.5], "activation": ["tanh", "cos"]}
    points = parse_experiment(experiment).sweep_points()
    assert len(points) == 4
    params = [p for p, _ in points]
    assert {"alpha": 1.0, "activation": "tanh"} in params
    for p, exp in points:
        assert exp.network.alphas() == [p["alpha"], p["alpha"]]
        assert exp.network.activation.kind == p["activation"]
        assert not exp.sweep

def test_empty_sweep_grid(experiment):
    """An empty grid is a configuration error."""
    experiment["sweep"] = {"alpha": []}
    with pytest.raises(ConfigError, match="empty"):
        parse_experiment(experiment).sweep_points()

def test_load_experiment_malformed_json(tmp_path, temp_home):
    """Syntax errors report line and column."""
    path = tmp_path / "bad.json"
    path.write_text('{"schema_version": 1,\n "seed": }')
    with pytest.raises(ConfigError, match="malformed JSON.*line 2"):
        load_experiment(path)

def test_load_experiment_missing_file(tmp_path, temp_home):
    """An unreadable path is a configuration error."""
    with pytest.raises(ConfigError, match="cannot read config"):
        load_experiment(tmp_path / "nope.json")

def test_load_experiment_user_defaults(tmp_path, temp_home, experiment):
    """Missing run sizes come from the user defaults."""
    del experiment["replicates"]
    Config().set_default("replicates", 1234)
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(experiment))
    assert load_experiment(path).replicates == 1234

def test_shipped_configs_load(shipped_configs, temp_home):
    """Every shipped config validates, except the deliberately rejected one."""
    for path in sorted(shipped_configs.glob("*.json")):
        if path.name == "relu_pareto_rejected.json":
            with pytest.raises(ConfigError, match="counterexample"):
                load_experiment(path)
        else:
            load_experiment(path)
