"""Test fixtures for stable_width."""

import json
from pathlib import Path
import pytest
from rich.console import Console

from stable_width.heavy_tail import TailSpec
from stable_width.mlp import Activation, LayerConfig, NetworkConfig

@pytest.fixture
def temp_home(tmp_path):
    """Create a temporary home directory for tests."""
    old_home = Path.home()
    home_dir = tmp_path / "home"
    home_dir.mkdir()
    Path.home = lambda: home_dir
    yield home_dir
    Path.home = lambda: old_home

@pytest.fixture
def temp_config(temp_home):
    """Create a temporary config directory."""
    config_dir = temp_home / ".stable_width"
    config_dir.mkdir()
    return config_dir

@pytest.fixture
def pareto_tanh():
    """One hidden layer, Pareto(1.5) weights, tanh, unit biases, input in R^2."""
    layer = LayerConfig(1.5, TailSpec.pareto(1.5), 1.0)
    return NetworkConfig(2, (layer, layer), Activation("tanh"))

@pytest.fixture
def deep_pareto_tanh():
    """Three hidden layers of Pareto(1.5) weights with tanh."""
    layer = LayerConfig(1.5, TailSpec.pareto(1.5), 1.0)
    return NetworkConfig(2, (layer,) * 4, Activation("tanh"))

@pytest.fixture
def experiment():
    """A small valid experiment document."""
    return {
        "schema_version": 1,
        "seed": 7,
        "network": {
            "input_dim": 2,
            "depth": 1,
            "activation": "tanh",
            "layers": [
                {"alpha": 1.5, "sigma_bias": 1.0},
                {"alpha": 1.5, "sigma_bias": 1.0},
            ],
        },
        "inputs": [[1.0, 0.5]],
        "layer": 2,
        "widths": [20, 40],
        "replicates": 300,
        "mc_size": 2000,
        "bootstrap": 0,
    }

@pytest.fixture
def write_config(tmp_path):
    """Write an experiment document to a JSON file and return its path."""
    def _write(data, name="experiment.json"):
        path = tmp_path / name
        if isinstance(data, str):
            path.write_text(data)
        else:
            path.write_text(json.dumps(data, indent=2))
        return path
    return _write

@pytest.fixture
def shipped_configs():
    """Directory holding the configs shipped with the repository."""
    return Path(__file__).resolve().parent.parent / "configs"

@pytest.fixture
def console():
    """Create a Rich console for testing."""
    return Console()
