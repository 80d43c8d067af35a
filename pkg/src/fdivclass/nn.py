"""Dense feedforward discriminators with hand-written reverse-mode gradients.

Only what the experiments need: dense layers, five activations, inverted
dropout on hidden layers, Adam and heavy-ball SGD, and a JSON checkpoint.

Checkpoint format (``fdivclass-net``, version 1) is a JSON object::

    {"format": "fdivclass-net", "version": 1, "mode": "supervised",
     "dropout": 0.0, "seed": 0,
     "layers": [{"activation": "leaky_relu", "slope": 0.01,
                 "shape": [n_in, n_out],
                 "weights": [...row-major n_in*n_out floats...],
                 "biases": [...n_out floats...]}, ...]}

Floats are written with ``repr`` precision so a save/load round trip is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

ACTIVATIONS = ("linear", "leaky_relu", "sigmoid", "softplus", "softmax")
CHECKPOINT_FORMAT = "fdivclass-net"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    """Non-finite loss, gradient or weight during training."""


class StaleTapeError(RuntimeError):
    """A tape was replayed after the network parameters changed."""


@dataclass
class Dense:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "linear"
    slope: float = 0.01

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[1],):
            raise ValueError(
                f"bad layer shapes: weights {self.weights.shape}, biases {self.biases.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]


def activate(kind: str, z: np.ndarray, slope: float = 0.01) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "leaky_relu":
        return np.where(z > 0, z, slope * z)
    if kind == "sigmoid":
        return expit(z)
    if kind == "softplus":
        return np.logaddexp(0.0, z)
    if kind == "softmax":
        e = np.exp(z - z.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    raise ValueError(kind)


def activation_backward(kind: str, z, a, g, slope: float = 0.01) -> np.ndarray:
    """Vector-Jacobian product of an activation, given pre-activation ``z`` and output ``a``."""
    if kind == "linear":
        return g
    if kind == "leaky_relu":
        return g * np.where(z > 0, 1.0, slope)
    if kind == "sigmoid":
        return g * a * (1.0 - a)
    if kind == "softplus":
        return g * expit(z)
    if kind == "softmax":
        return a * (g - np.sum(g * a, axis=-1, keepdims=True))
    raise ValueError(kind)


@dataclass
class Tape:
    """Activation record of one forward pass."""

    net: "DiscriminatorNet"
    version: int
    inputs: list = field(default_factory=list)  # layer inputs (after dropout)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)
    masks: list = field(default_factory=list)


class DiscriminatorNet:
    """Feedforward network in supervised (m outputs) or unsupervised (scalar) shape."""

    def __init__(self, layers, mode="supervised", dropout=0.0, seed=0):
        if mode not in ("supervised", "unsupervised"):
            raise ValueError(f"mode must be 'supervised' or 'unsupervised', got {mode!r}")
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {dropout}")
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ValueError(f"layer widths do not chain: {prev.n_out} -> {nxt.n_in}")
        for layer in layers[:-1]:
            if layer.activation == "softmax":
                raise ValueError("softmax is only allowed on the final layer")
        if mode == "unsupervised" and layers[-1].n_out != 1:
            raise ValueError("unsupervised networks have a single output")
        if mode == "supervised" and layers[-1].n_out < 2:
            raise ValueError("supervised networks need one output per class (m >= 2)")
        self.layers = layers
        self.mode = mode
        self.dropout = float(dropout)
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.version = 0

    @classmethod
    def build(
        cls,
        sizes,
        output_activation="linear",
        hidden_activation="leaky_relu",
        mode="supervised",
        dropout=0.0,
        seed=0,
        slope=0.01,
    ):
        """He-uniform init for leaky-ReLU layers, Xavier-uniform otherwise; zero biases."""
        rng = np.random.default_rng(seed)
        layers = []
        n = len(sizes) - 1
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = output_activation if i == n - 1 else hidden_activation
            if act == "leaky_relu":
                limit = math.sqrt(6.0 / ((1.0 + slope**2) * n_in))
            else:
                limit = math.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out))
            layers.append(Dense(w, np.zeros(n_out), act, slope))
        return cls(layers, mode=mode, dropout=dropout, seed=seed)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @property
    def params(self) -> list:
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.biases))
        return out

    def touch(self):
        self.version += 1

    def __call__(self, x):
        return forward(self, x, train_mode=False)[0]

    def copy(self) -> "DiscriminatorNet":
        return from_dict(to_dict(self))


def forward(net: DiscriminatorNet, inputs, train_mode: bool = False):
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if net.n_in == 1 else x[None, :]
    if x.shape[1] != net.n_in:
        raise ValueError(f"input width {x.shape[1]} does not match network input {net.n_in}")
    tape = Tape(net, net.version)
    last = len(net.layers) - 1
    h = x
    for i, layer in enumerate(net.layers):
        tape.inputs.append(h)
        z = h @ layer.weights + layer.biases
        a = activate(layer.activation, z, layer.slope)
        tape.pre.append(z)
        tape.post.append(a)
        mask = None
        if train_mode and net.dropout > 0 and i < last:
            keep = 1.0 - net.dropout
            mask = (net.rng.random(a.shape) < keep) / keep
            a = a * mask
        tape.masks.append(mask)
        h = a
    return h, tape


def backward(tape: Tape, output_grad, return_input_grad: bool = False):
    """Parameter gradients ``[dW0, db0, dW1, db1, ...]`` for a loss with ``d loss / d out = output_grad``."""
    net = tape.net
    if tape.version != net.version:
        raise StaleTapeError("network changed since this tape was recorded")
    g = np.asarray(output_grad, dtype=float)
    if g.shape != tape.post[-1].shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {tape.post[-1].shape}")
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if tape.masks[i] is not None:
            g = g * tape.masks[i]
        dz = activation_backward(layer.activation, tape.pre[i], tape.post[i], g, layer.slope)
        grads[2 * i] = tape.inputs[i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        g = dz @ layer.weights.T
    if return_input_grad:
        return grads, g
    return grads


class Adam:
    kind = "adam"

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def step(self, params, grads):
        _check_grads(params, grads, self.m)
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


class SGDMomentum:
    kind = "sgd_momentum"

    def __init__(self, params, lr=1e-3, momentum=0.9):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr, self.momentum = lr, momentum
        self.velocity = [np.zeros_like(p) for p in params]
        self.step_count = 0

    def step(self, params, grads):
        _check_grads(params, grads, self.velocity)
        self.step_count += 1
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v += g
            p -= self.lr * v
        return params


def _check_grads(params, grads, buffers):
    if len(params) != len(grads) or len(params) != len(buffers):
        raise ValueError("params, grads and optimizer buffers differ in length")
    for p, g, b in zip(params, grads, buffers):
        if p.shape != g.shape or p.shape != b.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, buffer {b.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient; step aborted")


def make_optimizer(kind: str, params, lr: float = 1e-3, **kwargs):
    if kind == "adam":
        return Adam(params, lr=lr, **kwargs)
    if kind in ("sgd", "sgd_momentum"):
        return SGDMomentum(params, lr=lr, **kwargs)
    raise ValueError(f"unknown optimizer {kind!r}")


def apply_step(net: DiscriminatorNet, optimizer, grads):
    optimizer.step(net.params, grads)
    net.touch()
    for p in net.params:
        if not np.all(np.isfinite(p)):
            raise TrainingError("non-finite weights after update")


def gradient_check(net: DiscriminatorNet, x, loss_and_grad, h: float = 1e-5) -> float:
    """Largest per-tensor relative error between backward() and central differences.

    ``loss_and_grad(outputs) -> (loss, d loss / d outputs)``.  The relative
    error of a tensor is ``max|a - n| / max(max|a|, max|n|)``.
    """
    out, tape = forward(net, x)
    _, g = loss_and_grad(out)
    analytic = backward(tape, g)
    worst = 0.0
    for p, a in zip(net.params, analytic):
        num = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            lp = loss_and_grad(forward(net, x)[0])[0]
            flat[j] = old - h
            lm = loss_and_grad(forward(net, x)[0])[0]
            flat[j] = old
            nflat[j] = (lp - lm) / (2 * h)
        scale = max(np.max(np.abs(a)), np.max(np.abs(num)), 1e-300)
        worst = max(worst, float(np.max(np.abs(a - num)) / scale))
    return worst


def to_dict(net: DiscriminatorNet) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "mode": net.mode,
        "dropout": net.dropout,
        "seed": net.seed,
        "layers": [
            {
                "activation": layer.activation,
                "slope": layer.slope,
                "shape": list(layer.weights.shape),
                "weights": layer.weights.ravel(order="C").tolist(),
                "biases": layer.biases.tolist(),
            }
            for layer in net.layers
        ],
    }


def from_dict(data: dict) -> DiscriminatorNet:
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a fdivclass network checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    layers = []
    for item in data["layers"]:
        shape = tuple(item["shape"])
        w = np.asarray(item["weights"], dtype=float).reshape(shape, order="C")
        layers.append(Dense(w, np.asarray(item["biases"], dtype=float), item["activation"], item["slope"]))
    return DiscriminatorNet(layers, mode=data["mode"], dropout=data["dropout"], seed=data["seed"])


def save_checkpoint(net: DiscriminatorNet, path) -> None:
    from fdivclass.io import atomic_write_text

    atomic_write_text(path, json.dumps(to_dict(net)))


def load_checkpoint(path) -> DiscriminatorNet:
    with open(path, encoding="utf-8") as fh:
        return from_dict(json.load(fh))
