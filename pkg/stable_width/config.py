"""Configuration management for stable_width.

Two layers: user-level run defaults in ``~/.stable_width/config.toml`` and
experiment files (JSON, ``schema_version`` 1) validated against :data:`SCHEMA`.
"""

import itertools
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import fastjsonschema
import numpy as np
import toml

from .counterexample import CounterexampleConfig
from .exceptions import ConfigError
from .logger import get_logger
from .mlp import Activation, NetworkConfig, check_widths
from .streams import MAX_SEED

logger = get_logger()

SCHEMA_VERSION = 1
THREADS_ENV = "STABLE_WIDTH_THREADS"

BUILTIN_DEFAULTS: Dict[str, Any] = {
    "threads": 1,
    "out_dir": "results",
    "mc_size": 1_000_000,
    "replicates": 10_000,
    "tolerance": None,
}
DEFAULT_TYPES = {"threads": int, "out_dir": str, "mc_size": int, "replicates": int, "tolerance": float}


class Config:
    """Handle user-level stable_width defaults."""

    def __init__(self):
        """Initialize the configuration."""
        self.config_dir = Path.home() / ".stable_width"
        self.config_file = self.config_dir / "config.toml"
        self._config: Dict[str, Any] = {}
        self._load_config()

    def load(self) -> None:
        """Load configuration from file."""
        self._load_config()

    def _load_config(self) -> None:
        """
        Load configuration from file.

        Raises:
            ConfigError: If config file exists but cannot be loaded
        """
        if self.config_file.exists():
            try:
                self._config = toml.load(self.config_file)
            except Exception as e:
                logger.error(f"Failed to load config file: {e}")
                raise ConfigError(f"Failed to load config file: {e}")

    def _save_config(self) -> None:
        """
        Save configuration to file.

        Raises:
            ConfigError: If config cannot be saved
        """
        try:
            self.config_dir.mkdir(parents=True, exist_ok=True)
            with open(self.config_file, "w") as f:
                toml.dump(self._config, f)
        except Exception as e:
            logger.error(f"Failed to save config file: {e}")
            raise ConfigError(f"Failed to save config file: {e}")

    @property
    def defaults(self) -> Dict[str, Any]:
        """User defaults from the ``[defaults]`` table."""
        table = self._config.get("defaults", {})
        return dict(table) if isinstance(table, dict) else {}

    def get_default(self, key: str) -> Any:
        """User default for ``key``, falling back to the built-in value."""
        _check_key(key)
        return self.defaults.get(key, BUILTIN_DEFAULTS[key])

    def set_default(self, key: str, value: Any) -> Any:
        """
        Store a user default, converting it to the key's type.

        Args:
            key: One of ``threads``, ``out_dir``, ``mc_size``, ``replicates``, ``tolerance``
            value: New value (strings from the command line are converted)

        Returns:
            The stored value

        Raises:
            ConfigError: If the key is unknown or the value does not convert
        """
        _check_key(key)
        try:
            converted = DEFAULT_TYPES[key](value)
        except (TypeError, ValueError):
            raise ConfigError(f"defaults.{key}: cannot use {value!r} as {DEFAULT_TYPES[key].__name__}")
        if key in ("threads", "mc_size", "replicates") and converted < 1:
            raise ConfigError(f"defaults.{key} must be >= 1, got {converted}")
        if key == "tolerance" and converted < 0:
            raise ConfigError(f"defaults.tolerance must be >= 0, got {converted}")
        self._config.setdefault("defaults", {})[key] = converted
        self._save_config()
        return converted

    def remove_default(self, key: str) -> bool:
        """Drop a user default; returns whether it was set."""
        _check_key(key)
        table = self._config.get("defaults", {})
        if key not in table:
            return False
        del table[key]
        self._save_config()
        return True


def _check_key(key: str) -> None:
    if key not in BUILTIN_DEFAULTS:
        raise ConfigError(f"unknown default '{key}', expected one of {sorted(BUILTIN_DEFAULTS)}")


def resolve_threads(flag: Optional[int] = None, config: Optional[Config] = None) -> int:
    """Thread count: flag, then STABLE_WIDTH_THREADS, then user default, then 1."""
    if flag is not None:
        value, source = flag, "--threads"
    elif os.environ.get(THREADS_ENV):
        try:
            value, source = int(os.environ[THREADS_ENV]), THREADS_ENV
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {os.environ[THREADS_ENV]!r}")
    else:
        value, source = (config or Config()).get_default("threads"), "defaults.threads"
    if value < 1:
        raise ConfigError(f"{source} must be >= 1, got {value}")
    return int(value)


_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}
_WIDTH = {
    "oneOf": [
        {"type": "integer", "minimum": 2},
        {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
    ]
}
_ACTIVATION = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {"kind": {"type": "string"}, "params": _NUMBER_LIST, "scale": {"type": "number"}},
        },
    ]
}
_WEIGHTS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["heavy", "finite", "stable"]},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
        "sv": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "log-power", "iterated-log", "user-table"]},
                "params": _NUMBER_LIST,
            },
        },
        "law": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {"name": {"enum": ["uniform", "gaussian", "student_t"]}, "params": _NUMBER_LIST},
        },
        "scale": {"type": "number", "exclusiveMinimum": 0},
    },
}
_LAYER = {
    "type": "object",
    "additionalProperties": False,
    "required": ["alpha"],
    "properties": {
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
        "weights": _WEIGHTS,
        "sigma_bias": {"type": "number", "minimum": 0},
    },
}
_TOLERANCE = {"type": "number", "minimum": 0}

SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "stable-width experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "seed"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": MAX_SEED},
        "network": {
            "type": "object",
            "additionalProperties": False,
            "required": ["input_dim", "layers"],
            "properties": {
                "input_dim": {"type": "integer", "minimum": 1},
                "depth": {"type": "integer", "minimum": 1},
                "activation": _ACTIVATION,
                "layers": {"type": "array", "minItems": 2, "items": _LAYER},
            },
        },
        "inputs": {"type": "array", "minItems": 1, "items": _NUMBER_LIST},
        "layer": {"type": "integer", "minimum": 2},
        "widths": {"type": "array", "minItems": 1, "items": _WIDTH},
        "replicates": {"type": "integer", "minimum": 1},
        "mc_size": {"type": "integer", "minimum": 2},
        "bootstrap": {"type": "integer", "minimum": 0},
        "atoms_budget": {"type": "integer", "minimum": 1},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "sup_cf": _TOLERANCE,
                "scale": _TOLERANCE,
                "variance": _TOLERANCE,
                "independence": _TOLERANCE,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"out_dir": {"type": "string"}, "prefix": {"type": "string"}},
        },
        "counterexample": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                "widths": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
                "replicates": {"type": "integer", "minimum": 1},
                "input_dim": {"type": "integer", "minimum": 1},
                "bootstrap": {"type": "integer", "minimum": 0},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 2}},
                "activation": {"type": "array", "items": _ACTIVATION},
                "widths": {"type": "array", "items": {"type": "array", "minItems": 1, "items": _WIDTH}},
            },
        },
    },
}

_validate = fastjsonschema.compile(SCHEMA)


@dataclass
class ExperimentConfig:
    """A validated experiment file."""

    network: NetworkConfig
    inputs: np.ndarray
    seed: int
    layer: int = 2
    widths: List[Any] = field(default_factory=list)
    replicates: int = BUILTIN_DEFAULTS["replicates"]
    mc_size: int = BUILTIN_DEFAULTS["mc_size"]
    bootstrap: int = 200
    atoms_budget: Optional[int] = None
    tolerances: Dict[str, float] = field(default_factory=dict)
    output: Dict[str, str] = field(default_factory=dict)
    counterexample: Optional[CounterexampleConfig] = None
    sweep: Dict[str, List[Any]] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def k(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def prefix(self) -> str:
        return self.output.get("prefix", "experiment")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with ``seed`` replaced, in the typed fields and in the hashed raw dict."""
        if not 0 <= seed <= MAX_SEED:
            raise ConfigError(f"seed must lie in [0, 2**64), got {seed}")
        raw = dict(self.raw, seed=seed)
        cex = replace(self.counterexample, seed=seed) if self.counterexample is not None else None
        return replace(self, seed=seed, raw=raw, counterexample=cex)

    def sweep_points(self) -> List[Tuple[Dict[str, Any], "ExperimentConfig"]]:
        """Expand the ``sweep`` grid into one config per (alpha, activation, widths) point."""
        grid = {key: values for key, values in self.sweep.items()}
        if not grid or any(len(v) == 0 for v in grid.values()):
            raise ConfigError("sweep: the parameter grid is empty")
        if "network" not in self.raw:
            raise ConfigError("sweep: the config has no 'network' to vary")
        keys = sorted(grid)
        points = []
        for combo in itertools.product(*(grid[key] for key in keys)):
            params = dict(zip(keys, combo))
            data = json.loads(json.dumps(self.raw))
            data.pop("sweep", None)
            if "alpha" in params:
                for pos, layer in enumerate(data["network"]["layers"]):
                    if layer.get("weights", {}).get("mode") == "finite":
                        raise ConfigError(f"sweep.alpha: network.layers[{pos}] has finite-variance weights (alpha fixed at 2)")
                    layer["alpha"] = params["alpha"]
                    layer.get("weights", {}).pop("alpha", None)
            if "activation" in params:
                data["network"]["activation"] = params["activation"]
            if "widths" in params:
                data["widths"] = params["widths"]
            points.append((params, parse_experiment(data)))
        return points


def _schema_error(e: fastjsonschema.JsonSchemaValueException) -> ConfigError:
    path = getattr(e, "name", None) or "data"
    message = str(e.message)
    if message.startswith(path + " "):
        message = message[len(path) + 1 :]
    return ConfigError(f"{path}: {message}")


def parse_experiment(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a decoded experiment document and build its typed form."""
    try:
        _validate(data)
    except fastjsonschema.JsonSchemaValueException as e:
        raise _schema_error(e) from None
    cex = None
    if "counterexample" in data:
        try:
            cex = CounterexampleConfig.from_dict(data["counterexample"], seed=data["seed"])
        except ConfigError as e:
            raise ConfigError(f"data.counterexample: {e}") from None
    if "network" in data:
        try:
            network = NetworkConfig.from_dict(data["network"])
        except ConfigError as e:
            raise ConfigError(f"data.network: {e}") from None
    elif cex is not None:
        network = cex.network()
    else:
        raise ConfigError("data: must contain 'network' (or a 'counterexample' block)")
    inputs = np.asarray(data.get("inputs", [[1.0] + [0.0] * (network.input_dim - 1)]), dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != network.input_dim:
        raise ConfigError(f"data.inputs: every input must have {network.input_dim} coordinates")
    layer = int(data.get("layer", 2))
    if layer > network.n_layers:
        raise ConfigError(f"data.layer: {layer} exceeds the number of layers {network.n_layers}")
    widths = list(data.get("widths", []))
    for pos, w in enumerate(widths):
        try:
            check_widths(network, (w,) * network.depth if isinstance(w, int) else w)
        except ConfigError as e:
            raise ConfigError(f"data.widths[{pos}]: {e}") from None
    normalized = [(w,) * network.depth if isinstance(w, int) else tuple(w) for w in widths]
    for pos, (a, b) in enumerate(zip(normalized, normalized[1:]), start=1):
        if any(y < x for x, y in zip(a, b)) or a == b:
            raise ConfigError(f"data.widths[{pos}]: widths must increase along the sweep ({list(a)} then {list(b)})")
    for pos, act in enumerate(data.get("sweep", {}).get("activation", [])):
        try:
            Activation.from_dict(act)
        except ConfigError as e:
            raise ConfigError(f"data.sweep.activation[{pos}]: {e}") from None
    return ExperimentConfig(
        network=network,
        inputs=inputs,
        seed=int(data["seed"]),
        layer=layer,
        widths=widths,
        replicates=int(data.get("replicates", BUILTIN_DEFAULTS["replicates"])),
        mc_size=int(data.get("mc_size", BUILTIN_DEFAULTS["mc_size"])),
        bootstrap=int(data.get("bootstrap", 200)),
        atoms_budget=data.get("atoms_budget"),
        tolerances={key: float(v) for key, v in data.get("tolerances", {}).items()},
        output=dict(data.get("output", {})),
        counterexample=cex,
        sweep=dict(data.get("sweep", {})),
        raw=data,
    )


def load_experiment(path: Union[str, Path], user: Optional[Config] = None) -> ExperimentConfig:
    """
    Read and validate an experiment file.

    Missing ``replicates``/``mc_size`` fall back to the user defaults.

    Raises:
        ConfigError: On unreadable files, malformed JSON or schema violations
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path} at line {e.lineno}, column {e.colno}: {e.msg}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    user = user or Config()
    for key in ("replicates", "mc_size"):
        if key not in data and key in user.defaults:
            data[key] = user.defaults[key]
    if "tolerances" not in data and user.defaults.get("tolerance") is not None:
        data["tolerances"] = {"sup_cf": user.defaults["tolerance"]}
    logger.debug(f"loaded experiment {path}")
    return parse_experiment(data)
