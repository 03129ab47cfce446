"""Finite-width MLPs with heavy-tailed weights and stable biases.

Pre-activations follow

    Y^(1)_i = Σ_j W^(1)_ij x_j + B^(1)_i
    Y^(ℓ)_i = a_{n_{ℓ-1}}(ℓ)^{-1} Σ_j W^(ℓ)_ij φ(Y^(ℓ-1)_j) + B^(ℓ)_i

with layer 1 unscaled and a_n taken from layer ℓ's own tail spec.

Weights are never stored. Replicates are processed in blocks of
``REPLICATE_BLOCK``; the weights and biases of a chunk of consecutive nodes in
one layer of one block come from the stream keyed ``(block, layer, chunk)``. The
chunk size is a function of the fan-in only, so a node's draws are the same
however many nodes are requested and whichever thread runs the block. The same
realization is reused across the k inputs of :func:`forward_joint`.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigError, DomainError, NumericalError
from .heavy_tail import TailSpec, a_n, draw_weights
from .logger import get_logger
from .stable_dist import StableParams, draw_sas
from .streams import RandomStream, SampleBatch, as_stream

logger = get_logger("mlp")

REPLICATE_BLOCK = 32
CHUNK_BUDGET = 1 << 21
MAX_NODE_CHUNK = 4096
MIN_WIDTH = 2

BOUNDED_KINDS = ("tanh", "cos", "clipped-linear", "constant")
UNBOUNDED_KINDS = ("relu", "abs-power")
ACTIVATION_KINDS = BOUNDED_KINDS + UNBOUNDED_KINDS

_N_PARAMS = {"tanh": 0, "cos": 0, "clipped-linear": 1, "constant": 1, "relu": 0, "abs-power": 1}


@dataclass(frozen=True)
class Activation:
    """φ, optionally multiplied by ``scale``.

    Bounded kinds report a finite ``sup_norm``. Unbounded kinds carry the
    envelope |φ(y)| ≤ a + b|y|^p as ``envelope = (a, b, p)``.
    """

    kind: str
    params: Tuple[float, ...] = ()
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ACTIVATION_KINDS:
            raise ConfigError(f"unknown activation '{self.kind}', expected one of {ACTIVATION_KINDS}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(self.params) != _N_PARAMS[self.kind]:
            raise ConfigError(f"activation '{self.kind}' takes {_N_PARAMS[self.kind]} parameter(s), got {self.params}")
        if self.kind == "clipped-linear" and self.params[0] < 0:
            raise ConfigError(f"clipped-linear needs a clip level >= 0, got {self.params[0]}")
        if self.kind == "abs-power" and not self.params[0] > 0:
            raise ConfigError(f"abs-power needs an exponent > 0, got {self.params[0]}")

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "tanh":
            out = np.tanh(y)
        elif self.kind == "cos":
            out = np.cos(y)
        elif self.kind == "clipped-linear":
            out = np.clip(y, -self.params[0], self.params[0])
        elif self.kind == "constant":
            out = np.full_like(y, self.params[0])
        elif self.kind == "relu":
            out = np.maximum(y, 0.0)
        else:
            out = np.abs(y) ** self.params[0]
        return self.scale * out if self.scale != 1.0 else out

    @property
    def bounded(self) -> bool:
        return self.kind in BOUNDED_KINDS

    @property
    def sup_norm(self) -> float:
        if not self.bounded:
            return math.inf
        level = self.params[0] if self.params else 1.0
        return abs(self.scale * level)

    @property
    def envelope(self) -> Tuple[float, float, float]:
        if self.bounded:
            return (self.sup_norm, 0.0, 0.0)
        power = 1.0 if self.kind == "relu" else self.params[0]
        return (0.0, abs(self.scale), power)

    @property
    def power(self) -> float:
        return self.envelope[2]

    def scaled(self, factor: float) -> "Activation":
        return Activation(self.kind, self.params, self.scale * factor)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind, "params": list(self.params)}
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out

    @classmethod
    def from_dict(cls, data: Union[str, Dict[str, Any]]) -> "Activation":
        if isinstance(data, str):
            return cls(data)
        return cls(data.get("kind", ""), tuple(data.get("params", ())), float(data.get("scale", 1.0)))


@dataclass(frozen=True)
class LayerConfig:
    """Weights W^(ℓ) ~ ``weights`` and biases B^(ℓ) ~ SαS(α, σ_B)."""

    alpha: float
    weights: TailSpec
    sigma_bias: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 2.0:
            raise ConfigError(f"layer alpha must lie in (0, 2], got {self.alpha}")
        if self.weights.alpha != self.alpha:
            raise ConfigError(f"weight tail index {self.weights.alpha} differs from layer alpha {self.alpha}")
        if self.sigma_bias < 0:
            raise ConfigError(f"sigma_bias must be >= 0, got {self.sigma_bias}")

    @property
    def bias(self) -> StableParams:
        return StableParams(self.alpha, self.sigma_bias)

    def to_dict(self) -> Dict[str, Any]:
        return {"alpha": self.alpha, "weights": self.weights.to_dict(), "sigma_bias": self.sigma_bias}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerConfig":
        alpha = float(data["alpha"])
        weights = dict(data.get("weights", {"mode": "heavy"}))
        weights.setdefault("alpha", alpha)
        return cls(alpha, TailSpec.from_dict(weights), float(data.get("sigma_bias", 0.0)))


@dataclass(frozen=True)
class NetworkConfig:
    """``layers[ℓ-1]`` describes layer ℓ; there are ``depth`` hidden layers plus the output layer."""

    input_dim: int
    layers: Tuple[LayerConfig, ...]
    activation: Activation
    unguarded: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if len(self.layers) < 2:
            raise ConfigError("a network needs at least one hidden layer and the output layer")
        if not self.unguarded:
            validate_regime(self)

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def layer(self, index: int) -> LayerConfig:
        if not 1 <= index <= self.n_layers:
            raise DomainError(f"layer {index} out of range 1..{self.n_layers}")
        return self.layers[index - 1]

    def alphas(self) -> List[float]:
        return [lc.alpha for lc in self.layers]

    def with_activation(self, activation: Activation) -> "NetworkConfig":
        return NetworkConfig(self.input_dim, self.layers, activation, self.unguarded)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "depth": self.depth,
            "activation": self.activation.to_dict(),
            "layers": [lc.to_dict() for lc in self.layers],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkConfig":
        layers = tuple(LayerConfig.from_dict(d) for d in data.get("layers", ()))
        depth = data.get("depth")
        if depth is not None and depth != len(layers) - 1:
            raise ConfigError(f"network.depth is {depth} but {len(layers)} layers were given (expected depth + 1)")
        return cls(int(data.get("input_dim", 0)), layers, Activation.from_dict(data.get("activation", "tanh")))


def validate_regime(net: NetworkConfig) -> None:
    """Reject unbounded activations outside the regimes where the limit exists.

    Allowed: any polynomial envelope when every layer has Gaussian weights; an
    envelope power β < min_{ℓ≥2} α_{ℓ-1}/α_ℓ when every layer has exact
    symmetric stable weights.
    """
    act = net.activation
    if act.bounded:
        return
    if all(lc.weights.is_gaussian for lc in net.layers):
        return
    alphas = net.alphas()
    bound = min(alphas[i - 1] / alphas[i] for i in range(1, len(alphas)))
    if all(lc.weights.is_exact_stable for lc in net.layers):
        if act.power < bound:
            return
        raise ConfigError(
            f"activation '{act.kind}' has envelope power {act.power:g} but exact stable weights need "
            f"power < min alpha_(l-1)/alpha_l = {bound:g}; networks outside this envelope diverge "
            "(see `stable-width counterexample`, the ReLU/Pareto case)"
        )
    raise ConfigError(
        f"unbounded activation '{act.kind}' needs all-Gaussian weights or all exact stable weights; "
        "with regularly varying weights the pre-activations diverge under the standard scaling, "
        "as the ReLU/Pareto counterexample shows (see `stable-width counterexample`)"
    )


def check_widths(net: NetworkConfig, widths: Sequence[int]) -> Tuple[int, ...]:
    widths = tuple(int(n) for n in widths)
    if len(widths) != net.depth:
        raise ConfigError(f"expected {net.depth} hidden widths, got {len(widths)}")
    for i, n in enumerate(widths, start=1):
        if n < MIN_WIDTH:
            raise ConfigError(f"width of layer {i} is {n}; widths must be >= {MIN_WIDTH}")
    return widths


def layer_scales(net: NetworkConfig, widths: Sequence[int]) -> List[float]:
    """Divisors per layer: 1 for layer 1, a_{n_{ℓ-1}}(ℓ) for ℓ ≥ 2."""
    scales = [1.0]
    for ell in range(2, net.n_layers + 1):
        a = a_n(net.layer(ell).weights, widths[ell - 2])
        logger.debug(f"layer {ell}: a_n(n={widths[ell - 2]}) = {a:.6g}")
        scales.append(a)
    return scales


def node_chunk(fan_in: int) -> int:
    """Nodes per keyed stream for a layer with ``fan_in`` inputs."""
    return int(max(1, min(MAX_NODE_CHUNK, CHUNK_BUDGET // (REPLICATE_BLOCK * max(fan_in, 1)))))


def _as_inputs(net: NetworkConfig, xs: Any) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(xs, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.input_dim:
        raise DomainError(f"inputs must be vectors in R^{net.input_dim}, got shape {np.shape(xs)}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("inputs must be finite")
    return arr, single


def _simulate_block(
    net: NetworkConfig,
    xs: np.ndarray,
    widths: Tuple[int, ...],
    scales: Sequence[float],
    wanted: Dict[int, np.ndarray],
    last: int,
    stream: RandomStream,
    block: int,
    size: int,
) -> Dict[int, np.ndarray]:
    """Run replicates ``block*REPLICATE_BLOCK ...`` of layers 1..``last``.

    ``wanted[ℓ]`` holds 1-based node indices to report for layer ℓ. Returns
    ``{ℓ: (size, len(wanted[ℓ]), k)}``.
    """
    k = xs.shape[0]
    prev = np.broadcast_to(xs[None, :, :], (size, k, net.input_dim))
    out: Dict[int, np.ndarray] = {}
    for ell in range(1, last + 1):
        lc = net.layer(ell)
        fan_in = prev.shape[2]
        chunk = node_chunk(fan_in)
        hidden = ell < last
        report = wanted.get(ell, np.empty(0, dtype=np.int64))
        needed = set(range(widths[ell - 1] // chunk + (widths[ell - 1] % chunk > 0))) if hidden else set()
        needed |= {int(i - 1) // chunk for i in report}
        chunks: Dict[int, np.ndarray] = {}
        for c in sorted(needed):
            gen = stream.child(block, ell, c).generator()
            w = draw_weights(lc.weights, (size, chunk, fan_in), gen)
            b = draw_sas(lc.bias, (size, chunk), gen)
            # pairwise summation runs along the contiguous last axis
            s = np.sum(w[:, :, None, :] * prev[:, None, :, :], axis=-1)
            y = s / scales[ell - 1] + b[:, :, None]
            if np.isnan(y).any():
                raise NumericalError(f"NaN in layer {ell} pre-activations (block {block}, chunk {c})")
            if not net.unguarded and not np.isfinite(y).all():
                raise NumericalError(f"overflow in layer {ell} pre-activations (block {block}, chunk {c})")
            chunks[c] = y
        if report.size:
            out[ell] = np.stack([chunks[(int(i) - 1) // chunk][:, (int(i) - 1) % chunk, :] for i in report], axis=1)
        if hidden:
            n = widths[ell - 1]
            full = np.concatenate([chunks[c] for c in sorted(chunks) if c * chunk < n], axis=1)[:, :n, :]
            prev = np.ascontiguousarray(np.transpose(net.activation(full), (0, 2, 1)))
    return out


def forward_joint(
    net: NetworkConfig,
    xs: Any,
    widths: Sequence[int],
    node_counts: Optional[Sequence[int]] = None,
    rng: Union[RandomStream, int] = 0,
) -> List[np.ndarray]:
    """One realization of the network evaluated at k inputs with shared weights.

    ``node_counts[ℓ-1]`` nodes are reported for layer ℓ (default: the width for
    hidden layers, 1 for the output layer); counts above the width extend the
    layer with extra nodes that are not fed forward. Returns one ``(nodes, k)``
    array per layer.
    """
    widths = check_widths(net, widths)
    arr, _ = _as_inputs(net, xs)
    if node_counts is None:
        node_counts = list(widths) + [1]
    if len(node_counts) != net.n_layers or any(c < 0 for c in node_counts):
        raise ConfigError(f"node_counts needs {net.n_layers} non-negative entries, got {list(node_counts)}")
    wanted = {ell: np.arange(1, c + 1) for ell, c in enumerate(node_counts, start=1)}
    scales = layer_scales(net, widths)
    res = _simulate_block(net, arr, widths, scales, wanted, net.n_layers, as_stream(rng), 0, 1)
    k = arr.shape[0]
    return [res[ell][0] if ell in res else np.empty((0, k)) for ell in range(1, net.n_layers + 1)]


def forward(
    net: NetworkConfig,
    x: Any,
    widths: Sequence[int],
    node_counts: Optional[Sequence[int]] = None,
    rng: Union[RandomStream, int] = 0,
) -> List[np.ndarray]:
    """:func:`forward_joint` with a single input; one flat array per layer."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError(f"forward takes one input vector, got shape {arr.shape}")
    return [v[:, 0] for v in forward_joint(net, arr, widths, node_counts, rng)]


def replicate_layer(
    net: NetworkConfig,
    xs: Any,
    widths: Sequence[int],
    layer: int,
    m: int,
    nodes: Sequence[int] = (1,),
    rng: Union[RandomStream, int] = 0,
    threads: int = 1,
) -> SampleBatch:
    """``m`` independent re-draws of the network; Y^(layer) at ``nodes``.

    Values have shape ``(m, len(nodes), k)``. Blocks are dispatched to a thread
    pool; each writes its own slice so the result does not depend on ``threads``.
    """
    if m < 1:
        raise DomainError(f"replicates must be >= 1, got {m}")
    widths = check_widths(net, widths)
    net.layer(layer)
    node_idx = np.asarray(sorted(set(int(i) for i in nodes)), dtype=np.int64)
    if node_idx.size == 0 or node_idx[0] < 1:
        raise DomainError(f"nodes must be a non-empty set of indices >= 1, got {list(nodes)}")
    arr, _ = _as_inputs(net, xs)
    stream = as_stream(rng)
    scales = layer_scales(net, widths)
    values = np.empty((m, node_idx.size, arr.shape[0]))
    n_blocks = -(-m // REPLICATE_BLOCK)
    logger.debug(f"layer {layer}: {m} replicates in {n_blocks} blocks on {threads} thread(s)")

    def run(block: int) -> None:
        start = block * REPLICATE_BLOCK
        size = min(REPLICATE_BLOCK, m - start)
        res = _simulate_block(net, arr, widths, scales, {layer: node_idx}, layer, stream, block, size)
        values[start : start + size] = res[layer]

    if threads <= 1 or n_blocks == 1:
        for block in range(n_blocks):
            run(block)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # list() re-raises the first worker exception
            list(pool.map(run, range(n_blocks)))
    return SampleBatch(values=values, lineage=stream.lineage, layer=layer, widths=widths, nodes=tuple(int(i) for i in node_idx))
