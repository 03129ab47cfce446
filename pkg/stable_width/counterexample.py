"""The ReLU/Pareto divergence example.

Both layers carry Pareto(α) weights (P(|W| > t) = t^{-α}, t ≥ 1), biases are
zero, φ = ReLU and x = (1, 0, ..., 0). Each summand W^(2) ReLU(W^(1)) of layer 2
then has the tail ½ z^{-α}(1 + α log z), heavier than any of the factors, so the
standard n^{1/α} scaling lets Y^(2) grow without bound. The log-corrected
scaling â_n = inf{x : x^{-α}(1 + α log x)/2 ≤ 1/n} stabilizes it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigError, DomainError
from .heavy_tail import TailSpec, bisect_threshold
from .logger import get_logger
from .mlp import Activation, LayerConfig, NetworkConfig, replicate_layer
from .reports import write_csv
from .stats import MIN_SCALE_SAMPLES, scale_estimator
from .streams import RandomStream, as_stream

logger = get_logger("counterexample")

GROWTH_SLACK = 0.5
CSV_HEADER = ("width", "scaling_mode", "median_abs", "sigma_hat")
STABLE_BAND = (0.7, 1.4)


def product_tail(z: Union[float, Sequence[float], np.ndarray], alpha: float) -> Union[float, np.ndarray]:
    """P(|W^(2) W^(1) 1{W^(1) > 0}| > z) = ½ z^{-α}(1 + α log z) for z ≥ 1."""
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(z_arr < 1.0):
        raise DomainError("the product tail is derived for z >= 1")
    out = 0.5 * z_arr ** (-alpha) * (1.0 + alpha * np.log(z_arr))
    return float(out) if out.ndim == 0 else out


def a_hat_n(alpha: float, n: int) -> float:
    """inf{x ≥ 1 : x^{-α}(1 + α log x)/2 ≤ 1/n}."""
    if not 0.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}")
    if n < 2:
        raise DomainError(f"a_hat_n needs n >= 2, got {n}")
    target = 1.0 / n
    # the product tail is 1/2 at x = 1, so n = 2 is solved there
    if 0.5 <= target:
        return 1.0
    return bisect_threshold(lambda x: float(product_tail(max(x, 1.0), alpha)), target, f"a_hat_n(n={n})")


@dataclass(frozen=True)
class CounterexampleConfig:
    alpha: float = 1.5
    widths: Tuple[int, ...] = (1_000, 10_000, 100_000)
    replicates: int = 10_000
    seed: int = 0
    input_dim: int = 1
    bootstrap: int = 200

    def __post_init__(self) -> None:
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if not 0.0 < self.alpha < 2.0:
            raise ConfigError(f"counterexample.alpha must lie in (0, 2), got {self.alpha}")
        if not self.widths:
            raise ConfigError("counterexample.widths must not be empty")
        if any(w < 2 for w in self.widths):
            raise ConfigError(f"counterexample.widths must be >= 2, got {list(self.widths)}")
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ConfigError(f"counterexample.widths must increase, got {list(self.widths)}")
        if self.replicates < 1:
            raise ConfigError(f"counterexample.replicates must be >= 1, got {self.replicates}")
        if self.input_dim < 1:
            raise ConfigError(f"counterexample.input_dim must be >= 1, got {self.input_dim}")

    def network(self) -> NetworkConfig:
        spec = TailSpec.pareto(self.alpha)
        layer = LayerConfig(self.alpha, spec, 0.0)
        return NetworkConfig(self.input_dim, (layer, layer), Activation("relu"), unguarded=True)

    def input(self) -> np.ndarray:
        x = np.zeros(self.input_dim)
        x[0] = 1.0
        return x

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "widths": list(self.widths),
            "replicates": self.replicates,
            "seed": self.seed,
            "input_dim": self.input_dim,
            "bootstrap": self.bootstrap,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], seed: int = 0) -> "CounterexampleConfig":
        return cls(
            alpha=float(data.get("alpha", 1.5)),
            widths=tuple(data.get("widths", (1_000, 10_000, 100_000))),
            replicates=int(data.get("replicates", 10_000)),
            seed=int(data.get("seed", seed)),
            input_dim=int(data.get("input_dim", 1)),
            bootstrap=int(data.get("bootstrap", 200)),
        )


@dataclass
class CounterexampleRow:
    width: int
    scaling_mode: str
    median_abs: float
    sigma_hat: float


@dataclass
class CounterexampleReport:
    config: CounterexampleConfig
    a_hat: Dict[int, float]
    rows: List[CounterexampleRow] = field(default_factory=list)
    flags: Dict[str, bool] = field(default_factory=dict)
    growth_threshold: float = math.nan
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.flags.get("growth", False)

    def series(self, mode: str, column: str = "sigma_hat") -> List[float]:
        return [getattr(r, column) for r in self.rows if r.scaling_mode == mode]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "a_hat": {str(n): v for n, v in self.a_hat.items()},
            "rows": [vars(r) for r in self.rows],
            "flags": self.flags,
            "growth_threshold": self.growth_threshold,
            "passed": self.passed,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_rows(self) -> List[List[Any]]:
        return [[r.width, r.scaling_mode, repr(r.median_abs), repr(r.sigma_hat)] for r in self.rows]

    def write_csv(self, path: Union[str, Path], config: Optional[Dict[str, Any]] = None) -> Path:
        """Columns ``width,scaling_mode,median_abs,sigma_hat``."""
        return write_csv(path, CSV_HEADER, self.csv_rows(), config or self.config.to_dict())


def divergence_experiment(cfg: CounterexampleConfig, threads: int = 1, rng: Union[RandomStream, int, None] = None) -> CounterexampleReport:
    """Simulate Y^(2) under n^{1/α} and under â_n scaling across ``cfg.widths``.

    The â_n run is the n^{1/α} run multiplied by n^{1/α}/â_n (same draws).
    Flags: ``growth`` when the largest-width σ̂ exceeds the smallest-width σ̂
    by at least half the predicted log factor (median |Y| replaces σ̂ below
    ``MIN_SCALE_SAMPLES`` replicates), ``monotone`` for increasing
    naive medians, and the exploratory ``stabilized`` for the corrected ratio
    lying in [0.7, 1.4].
    """
    stream = as_stream(cfg.seed if rng is None else rng)
    net = cfg.network()
    x = cfg.input()
    alpha = cfg.alpha
    report = CounterexampleReport(cfg, {n: a_hat_n(alpha, n) for n in cfg.widths})
    report.notes.append("stabilization under a_hat_n scaling is exploratory; only divergence under n^(1/alpha) is established")
    for idx, n in enumerate(cfg.widths):
        logger.info(f"counterexample width {n}: {cfg.replicates} replicates")
        batch = replicate_layer(net, x, (n,), 2, cfg.replicates, nodes=(1,), rng=stream.child("width", idx), threads=threads)
        naive = batch.node(1)
        corrected = naive * (n ** (1.0 / alpha) / report.a_hat[n])
        for mode, y in (("naive", naive), ("corrected", corrected)):
            sigma = math.nan
            if y.size >= MIN_SCALE_SAMPLES:
                sigma = scale_estimator(y, alpha, bootstrap=cfg.bootstrap, rng=stream.child("scale", idx, mode)).sigma
            report.rows.append(CounterexampleRow(n, mode, float(np.median(np.abs(y))), sigma))
            logger.debug(f"  {mode}: median |Y| {report.rows[-1].median_abs:.4g}, sigma_hat {sigma:.4g}")
    naive_median = report.series("naive", "median_abs")
    # median |Y| is proportional to σ for a stable law
    spread = "sigma_hat" if cfg.replicates >= MIN_SCALE_SAMPLES else "median_abs"
    if spread == "median_abs":
        report.notes.append(
            f"fewer than {MIN_SCALE_SAMPLES} replicates: sigma_hat is not estimated, the growth and stabilized flags compare median |Y|"
        )
    naive_sigma = report.series("naive", spread)
    corrected_sigma = report.series("corrected", spread)
    a_min, a_max = report.a_hat[cfg.widths[0]], report.a_hat[cfg.widths[-1]]
    report.growth_threshold = GROWTH_SLACK * ((1.0 + alpha * math.log(a_max)) / (1.0 + alpha * math.log(a_min))) ** (1.0 / alpha)
    if len(cfg.widths) > 1:
        report.flags["growth"] = naive_sigma[-1] >= report.growth_threshold * naive_sigma[0]
        report.flags["monotone"] = all(b > a for a, b in zip(naive_median, naive_median[1:]))
        ratio = corrected_sigma[-1] / corrected_sigma[0] if corrected_sigma[0] > 0 else math.inf
        report.flags["stabilized"] = STABLE_BAND[0] <= ratio <= STABLE_BAND[1]
    else:
        report.flags["growth"] = True
    return report
