"""Small dense-network engine: affine layers, exact backprop, RMSprop.

Layers may carry leading *stack* dimensions on their parameters, e.g. weights of
shape ``(k, out, in)`` describe ``k`` independent layers evaluated in one
batched matmul. Inputs are either a single vector ``(in,)``, a batch
``(B, in)`` (broadcast against every stack member) or a stacked batch
``(k, B, in)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

ACTIVATIONS = ("identity", "relu", "tanh", "softmax", "sigmoid")


class ShapeError(ValueError):
    """Raised when an input does not match a network's dimensions."""


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "softmax":
        return _softmax(z)
    raise ValueError(f"unknown activation {name!r}")


def activation_backward(name: str, z: np.ndarray, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Map dL/da to dL/dz given pre-activation ``z`` and output ``a``."""
    if name == "identity":
        return g
    if name == "relu":
        return g * (z > 0)
    if name == "tanh":
        return g * (1.0 - a * a)
    if name == "sigmoid":
        return g * a * (1.0 - a)
    if name == "softmax":
        return a * (g - (g * a).sum(axis=-1, keepdims=True))
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (*stack, out, in)
    biases: np.ndarray  # (*stack, out)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim < 2 or self.biases.shape != self.weights.shape[:-1]:
            raise ShapeError(
                f"weights {self.weights.shape} and biases {self.biases.shape} are incompatible"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[-1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[-2]

    @property
    def stack_shape(self) -> tuple:
        return self.weights.shape[:-2]

    def affine(self, x: np.ndarray) -> np.ndarray:
        # x: (..., B, in) -> (..., B, out)
        return x @ np.swapaxes(self.weights, -1, -2) + self.biases[..., None, :]


@dataclass
class Mlp:
    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer output {a.out_dim} does not feed layer input {b.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.biases))
        return out

    def copy(self) -> "Mlp":
        return Mlp([DenseLayer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers])


def init_mlp(
    sizes: Sequence[int],
    activations: Sequence[str],
    rng: np.random.Generator,
    stack: tuple = (),
) -> Mlp:
    """Glorot-uniform weights, zero biases.

    ``sizes`` lists the layer widths including input and output, so
    ``len(activations) == len(sizes) - 1``.
    """
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-s, s, size=(*stack, fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros((*stack, fan_out)), act))
    return Mlp(layers)


def _as_batch(mlp: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != mlp.in_dim:
        raise ShapeError(f"expected input of dimension {mlp.in_dim}, got shape {x.shape}")
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def forward_cache(mlp: Mlp, x: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Run the network on a batch, keeping (pre-activation, output) per layer.

    The first cache entry is ``(None, x)``.
    """
    cache = [(None, x)]
    a = x
    for layer in mlp.layers:
        z = layer.affine(a)
        a = activate(layer.activation, z)
        cache.append((z, a))
    return cache


def forward(mlp: Mlp, x) -> np.ndarray:
    xb, single = _as_batch(mlp, x)
    out = forward_cache(mlp, xb)[-1][1]
    return out[0] if single else out


def backward(mlp: Mlp, cache, upstream: np.ndarray, need_input: bool = True):
    """Reverse pass for the scalar ``sum(upstream * output)``.

    Returns ``(grads, dx)`` where ``grads`` matches ``mlp.params()`` order and
    ``dx`` has the shape of the cached activations fed to the first layer
    (stack dimensions included when the layers are stacked).
    """
    grads: list[np.ndarray] = [None] * (2 * len(mlp.layers))  # type: ignore[list-item]
    g = upstream
    dx = None
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        z, a = cache[i + 1]
        a_prev = cache[i][1]
        dz = activation_backward(layer.activation, z, a, g)
        dw = np.swapaxes(dz, -1, -2) @ a_prev
        # inputs shared across the stack broadcast here; reduce to the parameter shape
        while dw.ndim > layer.weights.ndim:
            dw = dw.sum(axis=0)
        grads[2 * i] = dw
        grads[2 * i + 1] = dz.sum(axis=-2)
        if i > 0 or need_input:
            g = dz @ layer.weights
        dx = g if i == 0 and need_input else None
    return grads, dx


def gradients(mlp: Mlp, x, upstream):
    """Exact gradients of ``<upstream, forward(mlp, x)>``.

    Returns ``(grads, dx)``; ``grads`` pairs with ``mlp.params()``.
    """
    xb, single = _as_batch(mlp, x)
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape[-1] != mlp.out_dim:
        raise ShapeError(f"upstream must have dimension {mlp.out_dim}, got shape {upstream.shape}")
    if single:
        upstream = upstream[None, :]
    cache = forward_cache(mlp, xb)
    if upstream.shape != cache[-1][1].shape:
        raise ShapeError(f"upstream shape {upstream.shape} != output shape {cache[-1][1].shape}")
    grads, dx = backward(mlp, cache, upstream)
    if single:
        dx = dx[0]
    return grads, dx


@dataclass
class RmspropState:
    """Running mean of squared gradients for one list of parameters."""

    mean_square: list[np.ndarray]
    decay: float = 0.9
    eps: float = 1e-8
    learning_rate: float = 1e-3

    @classmethod
    def for_params(cls, params: Iterable[np.ndarray], **kw) -> "RmspropState":
        return cls([np.zeros_like(p) for p in params], **kw)


def rmsprop_step(params: list[np.ndarray], grads: list[np.ndarray], state: RmspropState) -> None:
    """In-place RMSprop update: ``v <- rho v + (1-rho) g^2``, ``p <- p - lr g / sqrt(v + eps)``."""
    if len(params) != len(grads) or len(params) != len(state.mean_square):
        raise ShapeError("params, grads and optimizer state differ in length")
    rho, lr, eps = state.decay, state.learning_rate, state.eps
    for p, g, v in zip(params, grads, state.mean_square):
        if p.shape != g.shape or p.shape != v.shape:
            raise ShapeError(f"parameter shape {p.shape} does not match gradient {g.shape}")
        v *= rho
        v += (1.0 - rho) * g * g
        p -= lr * g / np.sqrt(v + eps)


# --- text serialization -----------------------------------------------------

def _fmt(values: np.ndarray) -> str:
    return " ".join(format(float(v), ".17g") for v in values.ravel())


def write_mlp(fh: TextIO, name: str, mlp: Mlp) -> None:
    """Write ``mlp`` as a ``mlp <name> <nlayers>`` block.

    Every layer is a header ``layer <activation> <weight shape>`` followed by
    one line of row-major weights and one line of biases.
    """
    fh.write(f"mlp {name} {len(mlp.layers)}\n")
    for layer in mlp.layers:
        shape = ",".join(str(s) for s in layer.weights.shape)
        fh.write(f"layer {layer.activation} {shape}\n")
        fh.write(_fmt(layer.weights) + "\n")
        fh.write(_fmt(layer.biases) + "\n")


def read_mlp(lines: Iterable[str]) -> tuple[str, Mlp]:
    it = iter(lines)
    head = next(it).split()
    if len(head) != 3 or head[0] != "mlp":
        raise ValueError(f"expected 'mlp <name> <count>' header, got {' '.join(head)!r}")
    name, count = head[1], int(head[2])
    layers = []
    for _ in range(count):
        tag, act, shape_s = next(it).split()
        if tag != "layer":
            raise ValueError(f"expected layer header, got {tag!r}")
        shape = tuple(int(s) for s in shape_s.split(","))
        w = np.array([float(v) for v in next(it).split()], dtype=float).reshape(shape)
        b = np.array([float(v) for v in next(it).split()], dtype=float).reshape(shape[:-1])
        layers.append(DenseLayer(w, b, act))
    return name, Mlp(layers)
