"""Dense feed-forward networks in plain numpy.

Weights are stored as (fan_in, fan_out) so a layer is ``a @ W + b``.
Everything is float64.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError

ACTIVATIONS = ("relu", "linear")


@dataclass
class Network:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i}: input dim {w.shape[0]} does not chain "
                                 f"with previous output {self.weights[i - 1].shape[1]}")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_parameters(self, params: list[np.ndarray]) -> "Network":
        return type(self)(**self._fields_with(params))

    def _fields_with(self, params):
        return dict(weights=list(params[0::2]), biases=list(params[1::2]),
                    activations=list(self.activations))

    def copy(self) -> "Network":
        return self.with_parameters([p.copy() for p in self.parameters()])


@dataclass
class AutoencoderParams(Network):
    """Symmetric autoencoder; the first ``n_encoder_layers`` layers form the encoder."""

    n_encoder_layers: int = 0

    def __post_init__(self):
        super().__post_init__()
        dims = self.dims
        k = self.n_encoder_layers
        if not 0 < k < self.n_layers:
            raise ShapeError(f"encoder depth {k} invalid for {self.n_layers} layers")
        if dims != dims[::-1]:
            raise ShapeError(f"autoencoder dims must be mirrored, got {dims}")

    def _fields_with(self, params):
        f = super()._fields_with(params)
        f["n_encoder_layers"] = self.n_encoder_layers
        return f

    @property
    def latent_dim(self) -> int:
        return self.dims[self.n_encoder_layers]

    def encoder(self) -> Network:
        k = self.n_encoder_layers
        return Network([w.copy() for w in self.weights[:k]],
                       [b.copy() for b in self.biases[:k]],
                       list(self.activations[:k]))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)
    wall_clock: float = 0.0
    seed: int | None = None


def autoencoder_dims(d: int, hidden, latent: int) -> list[int]:
    """``d, *hidden, latent, *reversed(hidden), d``."""
    hidden = list(hidden)
    return [d, *hidden, latent, *hidden[::-1], d]


def init_network(dims, activations, seed) -> Network:
    """Fan-in scaled uniform weights (He-uniform), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, list(activations))


def init_autoencoder(dims, seed, hidden_activation="relu") -> AutoencoderParams:
    dims = list(dims)
    if len(dims) < 3 or len(dims) % 2 == 0:
        raise ShapeError(f"autoencoder needs an odd number (>=3) of dims, got {dims}")
    k = len(dims) // 2
    acts = [hidden_activation] * (len(dims) - 1)
    # latent and reconstruction layers stay linear
    acts[k - 1] = "linear"
    acts[-1] = "linear"
    net = init_network(dims, acts, seed)
    return AutoencoderParams(net.weights, net.biases, net.activations, n_encoder_layers=k)


def dense_forward(net: Network, batch: np.ndarray) -> list[np.ndarray]:
    """Return ``[input, out_1, ..., out_L]`` (post-activation)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.dims[0]:
        raise ShapeError(f"batch shape {batch.shape} incompatible with input dim {net.dims[0]}")
    acts = [batch]
    a = batch
    for w, b, kind in zip(net.weights, net.biases, net.activations):
        a = a @ w + b
        if kind == "relu":
            a = np.maximum(a, 0.0)
        acts.append(a)
    return acts


def backward(net: Network, acts: list[np.ndarray], grad_out: np.ndarray):
    """Backpropagate ``dL/d(output)`` through the network.

    Returns the flat gradient list (same order as ``net.parameters()``) and
    the gradient with respect to the input batch.
    """
    grads = [None] * (2 * net.n_layers)
    g = grad_out
    for i in range(net.n_layers - 1, -1, -1):
        if net.activations[i] == "relu":
            g = g * (acts[i + 1] > 0)
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return grads, g


def reconstruction_loss(x, x_hat) -> float:
    """Mean over rows of the squared Euclidean reconstruction error."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    if x.shape[0] == 0:
        return 0.0
    return float(np.sum((x - x_hat) ** 2) / x.shape[0])


def backprop_reconstruction(params: Network, batch):
    """Loss and exact gradients of :func:`reconstruction_loss` for ``params(batch)``."""
    acts = dense_forward(params, batch)
    x, x_hat = acts[0], acts[-1]
    if x_hat.shape != x.shape:
        raise ShapeError("network output does not match input width")
    n = x.shape[0]
    loss = float(np.sum((x_hat - x) ** 2) / n)
    grads, _ = backward(params, acts, 2.0 * (x_hat - x) / n)
    return loss, grads


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    m = state.m if state.m is not None else [np.zeros_like(p) for p in params]
    v = state.v if state.v is not None else [np.zeros_like(p) for p in params]
    if len(m) != len(params) or any(a.shape != p.shape for a, p in zip(m, params)):
        raise ShapeError("optimizer state does not match parameters")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, mi, vi in zip(params, grads, m, v):
        mi = b1 * mi + (1.0 - b1) * g
        vi = b2 * vi + (1.0 - b2) * g * g
        new_p.append(p - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps))
        new_m.append(mi)
        new_v.append(vi)
    return new_p, AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)


def minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_autoencoder(data, dims, epochs=50, batch_size=256, seed=0, lr=1e-3,
                      hidden_activation="relu", init=None):
    """Train a symmetric autoencoder end to end with Adam on the reconstruction loss.

    ``init`` may supply starting parameters; otherwise they are drawn from
    ``seed``. The last partial batch of each epoch is used as is.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if not np.all(np.isfinite(data)):
        raise ValueError("training data contains non-finite values")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    params = init if init is not None else init_autoencoder(dims, seed, hidden_activation)
    if params.dims[0] != data.shape[1]:
        raise ShapeError(f"data width {data.shape[1]} != input dim {params.dims[0]}")
    log = TrainLog(seed=seed)
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr)
    flat = params.parameters()
    for _ in range(epochs):
        total = 0.0
        for idx in minibatches(len(data), batch_size, rng):
            loss, grads = backprop_reconstruction(params.with_parameters(flat), data[idx])
            flat, state = adam_step(flat, grads, state)
            total += loss * len(idx)
        log.losses.append(total / len(data))
    params = params.with_parameters(flat)
    if not all(np.all(np.isfinite(p)) for p in flat):
        raise FloatingPointError("autoencoder parameters diverged")
    log.wall_clock = time.perf_counter() - t0
    return params, log


def encode(params: Network, x) -> np.ndarray:
    """Latent codes: the bottleneck activation of an autoencoder (or the output of a bare encoder)."""
    net = params.encoder() if isinstance(params, AutoencoderParams) else params
    return dense_forward(net, x)[-1]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
