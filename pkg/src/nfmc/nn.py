"""Minimal dense neural-network kernel.

Fully connected ReLU networks with explicit forward and reverse-mode
backward passes, plus a bias-corrected Adam optimizer.  This is the
substrate for the scale/shift networks inside the coupling layers; it is
deliberately restricted to that fixed topology (no generic autodiff
graph, no convolutions).

Everything is computed in double precision.  Forward and backward are
pure functions of their inputs; only ``adam_step`` mutates state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "MlpConfig",
    "MlpParams",
    "MlpCache",
    "AdamState",
    "mlp_init",
    "mlp_forward",
    "mlp_backward",
    "adam_step",
    "mlp_to_json_dict",
    "mlp_from_json_dict",
]


@dataclass(frozen=True)
class MlpConfig:
    """Architecture of a fully connected ReLU network.

    ``hidden_widths`` lists the hidden-layer sizes; the output layer is
    linear.  ``init_scale`` is the standard deviation of the Gaussian
    weight initialization.  With ``zero_final_layer`` the last layer's
    weights and bias start at exactly zero, so the freshly initialized
    network outputs the zero vector for every input.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    activation: str = "relu"
    init_scale: float = 0.01
    zero_final_layer: bool = False

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if len(self.hidden_widths) == 0:
            raise ValueError("hidden_widths must be nonempty")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("all hidden widths must be >= 1")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if not self.init_scale >= 0.0:
            raise ValueError("init_scale must be >= 0")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(out, in) shape of every weight matrix, input to output."""
        sizes = (self.input_dim, *self.hidden_widths, self.output_dim)
        return [(sizes[k + 1], sizes[k]) for k in range(len(sizes) - 1)]


@dataclass
class MlpParams:
    """Weights and biases of an MLP, ordered input to output.

    ``weights[k]`` has shape (out_k, in_k) and ``biases[k]`` shape
    (out_k,); consecutive layer shapes chain.  The architecture config is
    carried along for serialization and validation.
    """

    config: MlpConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = self.config.layer_dims
        if len(self.weights) != len(dims) or len(self.biases) != len(dims):
            raise ValueError("layer count does not match config")
        for k, (o, i) in enumerate(dims):
            if self.weights[k].shape != (o, i):
                raise ValueError(f"layer {k}: weight shape {self.weights[k].shape} != {(o, i)}")
            if self.biases[k].shape != (o,):
                raise ValueError(f"layer {k}: bias shape {self.biases[k].shape} != {(o,)}")

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays, weights and biases interleaved per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def array_names(self) -> list[str]:
        out = []
        for k in range(self.num_layers):
            out.append(f"layer {k} weight")
            out.append(f"layer {k} bias")
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.config,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            self.config,
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
        )


@dataclass
class MlpCache:
    """Activation record produced by ``mlp_forward`` for one input batch.

    Holds the input of every layer and the pre-activations of the hidden
    layers, which is exactly what the backward pass needs.
    """

    params_id: int
    squeeze: bool
    layer_inputs: list[np.ndarray]
    preactivations: list[np.ndarray]


def mlp_init(config: MlpConfig, seed) -> MlpParams:
    """Initialize an MLP: Gaussian weights of std ``init_scale``, zero biases.

    ``seed`` is anything ``numpy.random.default_rng`` accepts; the same
    seed always yields bit-identical parameters.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    dims = config.layer_dims
    for k, (o, i) in enumerate(dims):
        if config.zero_final_layer and k == len(dims) - 1:
            w = np.zeros((o, i))
        else:
            w = rng.normal(0.0, config.init_scale, size=(o, i)) if config.init_scale > 0 else np.zeros((o, i))
        weights.append(w)
        biases.append(np.zeros(o))
    return MlpParams(config, weights, biases)


def _as_batch(x: np.ndarray, dim: int, what: str):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"{what}: expected length {dim}, got {x.shape[0]}")
        return x[None, :], True
    if x.ndim == 2:
        if x.shape[1] != dim:
            raise ValueError(f"{what}: expected trailing dim {dim}, got {x.shape[1]}")
        return x, False
    raise ValueError(f"{what}: expected 1- or 2-d array, got ndim={x.ndim}")


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Evaluate the network and record activations for the backward pass.

    Accepts a single vector of length ``input_dim`` or a (batch, input_dim)
    array; the output matches that shape convention.
    """
    a, squeeze = _as_batch(x, params.config.input_dim, "mlp_forward input")
    n_layers = params.num_layers
    layer_inputs: list[np.ndarray] = []
    preacts: list[np.ndarray] = []
    for k in range(n_layers):
        layer_inputs.append(a)
        z = a @ params.weights[k].T + params.biases[k]
        if k < n_layers - 1:
            preacts.append(z)
            # ReLU; the subgradient at exactly 0 is taken as 0
            a = np.maximum(z, 0.0)
        else:
            a = z
    cache = MlpCache(id(params), squeeze, layer_inputs, preacts)
    return (a[0] if squeeze else a), cache


def mlp_backward(
    params: MlpParams, cache: MlpCache, grad_output: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Reverse-mode gradients of <grad_output, mlp_forward(x)>.

    Returns an ``MlpParams``-shaped container of parameter gradients and
    the gradient with respect to the input.  For a batched cache the
    parameter gradients are summed over the batch and ``grad_output``
    must be (batch, output_dim).
    """
    if cache.params_id != id(params):
        raise ValueError("cache does not belong to these parameters")
    g, g_squeeze = _as_batch(grad_output, params.config.output_dim, "mlp_backward grad_output")
    if g_squeeze != cache.squeeze or g.shape[0] != cache.layer_inputs[0].shape[0]:
        raise ValueError("grad_output batch shape does not match the forward cache")

    n_layers = params.num_layers
    grad_w = [np.empty(0)] * n_layers
    grad_b = [np.empty(0)] * n_layers
    for k in range(n_layers - 1, -1, -1):
        a_in = cache.layer_inputs[k]
        grad_w[k] = g.T @ a_in
        grad_b[k] = g.sum(axis=0)
        g = g @ params.weights[k]
        if k > 0:
            g = g * (cache.preactivations[k - 1] > 0)
    grads = MlpParams(params.config, grad_w, grad_b)
    return grads, (g[0] if cache.squeeze else g)


@dataclass
class AdamState:
    """Moment accumulators for bias-corrected Adam over a list of arrays."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon_stab > 0.0:
            raise ValueError("epsilon_stab must be > 0")

    @classmethod
    def for_arrays(cls, arrays: Sequence[np.ndarray], beta1=0.9, beta2=0.999, epsilon_stab=1e-8):
        return cls(
            [np.zeros_like(a) for a in arrays],
            [np.zeros_like(a) for a in arrays],
            0,
            beta1,
            beta2,
            epsilon_stab,
        )


def _param_arrays(params) -> tuple[list[np.ndarray], list[str]]:
    if isinstance(params, MlpParams):
        return params.arrays(), params.array_names()
    arrays = list(params)
    return arrays, [f"array {k}" for k in range(len(arrays))]


def adam_step(state: AdamState, params, grads, learning_rate: float) -> None:
    """One in-place Adam update; increments ``state.step_count``.

    ``params`` and ``grads`` are either both ``MlpParams`` or parallel
    sequences of arrays.  Raises on non-finite gradient entries, naming
    the offending array.
    """
    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    arrays, names = _param_arrays(params)
    grad_arrays, _ = _param_arrays(grads)
    if len(arrays) != len(grad_arrays):
        raise ValueError("params and grads have different array counts")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for k, (p, g) in enumerate(zip(arrays, grad_arrays)):
        if p.shape != g.shape:
            raise ValueError(f"{names[k]}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {names[k]}")
        m = state.first_moment[k]
        v = state.second_moment[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon_stab)


def mlp_to_json_dict(params: MlpParams) -> dict:
    """Flat JSON form: config plus per-layer row-major weight/bias arrays."""
    cfg = params.config
    return {
        "config": {
            "input_dim": cfg.input_dim,
            "hidden_widths": list(cfg.hidden_widths),
            "output_dim": cfg.output_dim,
            "activation": cfg.activation,
            "init_scale": cfg.init_scale,
            "zero_final_layer": cfg.zero_final_layer,
        },
        "layers": [
            {"weight": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }


def mlp_from_json_dict(obj: dict) -> MlpParams:
    c = obj["config"]
    config = MlpConfig(
        input_dim=int(c["input_dim"]),
        hidden_widths=tuple(c["hidden_widths"]),
        output_dim=int(c["output_dim"]),
        activation=c.get("activation", "relu"),
        init_scale=float(c.get("init_scale", 0.01)),
        zero_final_layer=bool(c.get("zero_final_layer", False)),
    )
    dims = config.layer_dims
    layers = obj["layers"]
    if len(layers) != len(dims):
        raise ValueError("serialized layer count does not match config")
    weights, biases = [], []
    for (o, i), layer in zip(dims, layers):
        weights.append(np.asarray(layer["weight"], dtype=float).reshape(o, i))
        biases.append(np.asarray(layer["bias"], dtype=float))
    return MlpParams(config, weights, biases)
