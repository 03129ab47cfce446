"""Tests for the finite-width network simulator."""

import numpy as np
import pytest
from stable_width.exceptions import ConfigError, DomainError
from stable_width.heavy_tail import TailSpec
from stable_width.mlp import (
    Activation,
    LayerConfig,
    NetworkConfig,
    check_widths,
    forward,
    forward_joint,
    layer_scales,
    node_chunk,
    replicate_layer,
)
from stable_width.stable_dist import StableParams, c_alpha, cf_sas
from stable_width.stats import ecf

def _net(activation, weights, depth=1, sigma_bias=0.0, input_dim=1, unguarded=False):
    layer = LayerConfig(weights.alpha, weights, sigma_bias)
    return NetworkConfig(input_dim, (layer,) * (depth + 1), activation, unguarded)

def test_activation_values():
    """Each activation kind evaluates as documented."""
    y = np.array([-2.0, 0.0, 0.5])
    np.testing.assert_allclose(Activation("tanh")(y), np.tanh(y))
    np.testing.assert_allclose(Activation("clipped-linear", (1.0,))(y), [-1.0, 0.0, 0.5])
    np.testing.assert_allclose(Activation("constant", (0.3,))(y), [0.3, 0.3, 0.3])
    np.testing.assert_allclose(Activation("relu")(y), [0.0, 0.0, 0.5])
    np.testing.assert_allclose(Activation("abs-power", (2.0,), 0.5)(y), [2.0, 0.0, 0.125])

def test_activation_envelopes():
    """Bounded kinds have a sup norm; unbounded ones a power envelope."""
    assert Activation("cos").sup_norm == 1.0
    assert Activation("clipped-linear", (2.0,), 3.0).sup_norm == 6.0
    assert Activation("relu").sup_norm == np.inf
    assert Activation("abs-power", (0.6,)).envelope == (0.0, 1.0, 0.6)
    assert Activation.from_dict("cos") == Activation("cos")
    assert Activation.from_dict({"kind": "constant", "params": [2.0]}).sup_norm == 2.0

def test_activation_validation():
    """Unknown kinds and bad parameters are configuration errors."""
    with pytest.raises(ConfigError):
        Activation("sigmoid")
    with pytest.raises(ConfigError):
        Activation("clipped-linear", (-1.0,))
    with pytest.raises(ConfigError):
        Activation("abs-power", (0.0,))
    with pytest.raises(ConfigError):
        Activation("tanh", (1.0,))

def test_layer_config_validation():
    """Layer alpha must match the weight tail index; biases need sigma >= 0."""
    with pytest.raises(ConfigError):
        LayerConfig(1.2, TailSpec.pareto(1.5))
    with pytest.raises(ConfigError):
        LayerConfig(1.5, TailSpec.pareto(1.5), -1.0)
    lc = LayerConfig.from_dict({"alpha": 1.3, "sigma_bias": 0.5})
    assert lc.weights.alpha == 1.3 and lc.bias == StableParams(1.3, 0.5)

def test_network_from_dict_depth_mismatch():
    """Declared depth must match the number of layers."""
    data = {"input_dim": 1, "depth": 2, "activation": "tanh", "layers": [{"alpha": 1.5}, {"alpha": 1.5}]}
    with pytest.raises(ConfigError, match="depth"):
        NetworkConfig.from_dict(data)

def test_relu_with_pareto_rejected():
    """Unbounded activations with regularly varying weights are refused."""
    with pytest.raises(ConfigError, match="counterexample"):
        _net(Activation("relu"), TailSpec.pareto(1.5))
    net = _net(Activation("relu"), TailSpec.pareto(1.5), unguarded=True)
    assert net.activation.kind == "relu"

def test_unbounded_regimes_allowed():
    """Gaussian weights take any polynomial envelope; stable weights need power < ratio."""
    assert _net(Activation("relu"), TailSpec.finite("gaussian", 1.0)).depth == 1
    assert _net(Activation("abs-power", (0.6,)), TailSpec.stable(1.5)).depth == 1
    with pytest.raises(ConfigError, match="envelope power"):
        _net(Activation("abs-power", (1.2,)), TailSpec.stable(1.5))

def test_check_widths(pareto_tanh):
    """One width per hidden layer, each at least 2."""
    assert check_widths(pareto_tanh, [10]) == (10,)
    with pytest.raises(ConfigError):
        check_widths(pareto_tanh, [10, 10])
    with pytest.raises(ConfigError):
        check_widths(pareto_tanh, [1])

def test_layer_scales(pareto_tanh):
    """Layer 1 is unscaled; later layers divide by a_n of the previous width."""
    scales = layer_scales(pareto_tanh, (1000,))
    assert scales[0] == 1.0
    assert scales[1] == pytest.approx(100.0)

def test_stable_alpha_two_weights_scale_like_gaussian():
    """Exact SaS(2) weights get the Gaussian scaling and a finite forward pass."""
    net = _net(Activation("tanh"), TailSpec.stable(2.0, 1.0), sigma_bias=0.5)
    assert layer_scales(net, (100,))[1] == pytest.approx(10.0, rel=1e-6)
    out = forward(net, [1.0], (100,), rng=3)
    assert all(np.all(np.isfinite(v)) for v in out)

def test_node_chunk_bounds():
    """Chunk size depends only on fan-in and stays in [1, 4096]."""
    assert node_chunk(1) == 4096
    assert node_chunk(10**9) == 1
    assert node_chunk(1000) == node_chunk(1000)

def test_forward_shapes_and_determinism(pareto_tanh):
    """Default node counts are the widths plus one output node; same seed gives same draws."""
    out = forward(pareto_tanh, [1.0, 0.5], (30,), rng=5)
    assert [len(v) for v in out] == [30, 1]
    again = forward(pareto_tanh, [1.0, 0.5], (30,), rng=5)
    np.testing.assert_array_equal(out[1], again[1])
    other = forward(pareto_tanh, [1.0, 0.5], (30,), rng=6)
    assert not np.array_equal(out[0], other[0])

def test_zero_input_without_bias_is_zero():
    """tanh(0) = 0 so every layer vanishes."""
    net = _net(Activation("tanh"), TailSpec.pareto(1.5), depth=2, input_dim=3)
    for values in forward(net, [0.0, 0.0, 0.0], (8, 8), rng=1):
        assert np.all(values == 0.0)

def test_extra_nodes_do_not_change_existing(pareto_tanh):
    """Requesting more output nodes keeps node 1 unchanged."""
    few = forward(pareto_tanh, [1.0, 0.5], (25,), node_counts=[25, 1], rng=3)
    many = forward(pareto_tanh, [1.0, 0.5], (25,), node_counts=[25, 40], rng=3)
    assert many[1][0] == few[1][0]
    assert len(many[1]) == 40

def test_joint_inputs_share_weights():
    """Layer 1 is linear in x when biases vanish, with one weight draw for all inputs."""
    net = _net(Activation("tanh"), TailSpec.pareto(1.5), input_dim=2)
    x = np.array([1.0, -0.5])
    out = forward_joint(net, [x, 2 * x, x], (16,), rng=11)
    np.testing.assert_allclose(out[0][:, 1], 2 * out[0][:, 0])
    np.testing.assert_array_equal(out[1][:, 2], out[1][:, 0])

def test_forward_input_checks(pareto_tanh):
    """Inputs must have the declared dimension and be finite."""
    with pytest.raises(DomainError):
        forward(pareto_tanh, [1.0, 2.0, 3.0], (10,))
    with pytest.raises(DomainError):
        forward(pareto_tanh, [1.0, np.nan], (10,))
    with pytest.raises(DomainError):
        forward(pareto_tanh, [[1.0, 2.0]], (10,))

def test_replicate_independent_of_threads(pareto_tanh):
    """Keyed streams make the result identical for any thread count."""
    one = replicate_layer(pareto_tanh, [[1.0, 0.5]], (20,), layer=2, m=100, nodes=(1, 3), rng=8, threads=1)
    four = replicate_layer(pareto_tanh, [[1.0, 0.5]], (20,), layer=2, m=100, nodes=(1, 3), rng=8, threads=4)
    np.testing.assert_array_equal(one.values, four.values)
    assert one.values.shape == (100, 2, 1)
    assert one.nodes == (1, 3) and one.widths == (20,)

def test_first_replicate_matches_forward(pareto_tanh):
    """A single replicate is the realization :func:`forward` draws for the same seed."""
    batch = replicate_layer(pareto_tanh, [[1.0, 0.5]], (12,), layer=2, m=1, rng=21)
    single = forward(pareto_tanh, [1.0, 0.5], (12,), rng=21)
    assert batch.node(1)[0] == single[1][0]

def test_replicate_errors(pareto_tanh):
    """Bad replicate counts, node sets and layers are domain errors."""
    with pytest.raises(DomainError):
        replicate_layer(pareto_tanh, [[1.0, 0.5]], (10,), layer=2, m=0)
    with pytest.raises(DomainError):
        replicate_layer(pareto_tanh, [[1.0, 0.5]], (10,), layer=2, m=5, nodes=())
    with pytest.raises(DomainError):
        replicate_layer(pareto_tanh, [[1.0, 0.5]], (10,), layer=3, m=5)

def test_constant_activation_gives_stable_sum():
    """With phi = 1 layer 2 is a normalized Pareto sum, close to SaS(c_alpha^(1/alpha))."""
    net = _net(Activation("constant", (1.0,)), TailSpec.pareto(1.5))
    batch = replicate_layer(net, [[1.0]], (5000,), layer=2, m=4000, rng=2)
    t = np.linspace(0.25, 2.0, 8)
    expected = cf_sas(StableParams(1.5, c_alpha(1.5) ** (1 / 1.5)), t)
    assert np.max(np.abs(ecf(batch.node(1), t).real - expected)) < 0.06
