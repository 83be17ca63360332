"""
Small fully connected network with hand-written backpropagation, SGD and Adam.

Weights are stored (fan_in, fan_out) so a batch X of shape (B, fan_in) maps to
X @ W + b.
"""
import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import expit

from mixgrad.errors import DimensionError, InvariantError, NumericalError
from mixgrad.losses import DEFAULT_FLOOR, LOSS_NAMES, LossFn, make_loss
from mixgrad.seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

HiddenActivation = Literal["relu", "tanh"]
OutputActivation = Literal["sigmoid", "identity"]
OptimizerName = Literal["sgd", "adam"]


@dataclass
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: HiddenActivation = "relu"
    output_activation: OutputActivation = "sigmoid"

    def __post_init__(self):
        sizes = [int(s) for s in self.layer_sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise InvariantError(f"layer_sizes must hold >= 2 positive sizes, got {sizes}")
        if self.hidden_activation not in ("relu", "tanh"):
            raise InvariantError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in ("sigmoid", "identity"):
            raise InvariantError(f"unknown output activation {self.output_activation!r}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DimensionError("need one weight matrix and one bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise DimensionError(f"layer {i} has shapes {w.shape}/{b.shape}, "
                                     f"expected {(sizes[i], sizes[i + 1])}/{(sizes[i + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvariantError(f"layer {i} has non-finite parameters")
        self.layer_sizes = sizes

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_parameters(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def copy(self) -> "Mlp":
        return copy.deepcopy(self)


@dataclass
class MlpGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray


@dataclass
class ForwardCache:
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)


def init_mlp(layer_sizes, hidden_activation: HiddenActivation = "relu",
             output_activation: OutputActivation = "sigmoid", seed: int = 0,
             rng: np.random.Generator | None = None, zero_last: bool = False) -> Mlp:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = rng if rng is not None else make_rng(derive_seed(seed, "init"))
    sizes = [int(s) for s in layer_sizes]
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=fan_out)
        if zero_last and i == len(sizes) - 2:
            w = np.zeros_like(w)
            b = np.zeros_like(b)
        weights.append(w)
        biases.append(b)
    return Mlp(sizes, weights, biases, hidden_activation, output_activation)


# ---------- activations ----------
def _hidden(name: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _hidden_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (z > 0).astype(z.dtype) if name == "relu" else 1.0 - a * a


def _output(name: str, z: np.ndarray) -> np.ndarray:
    return expit(z) if name == "sigmoid" else z


def _output_grad(name: str, a: np.ndarray) -> np.ndarray:
    return a * (1.0 - a) if name == "sigmoid" else np.ones_like(a)


# ---------- passes ----------
def _as_batch(m: Mlp, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = arr[None, :] if single else arr
    if arr.ndim != 2 or arr.shape[1] != m.layer_sizes[0]:
        raise DimensionError(f"input has shape {np.shape(x)}, network expects {m.layer_sizes[0]} features")
    return arr, single


def forward_cached(m: Mlp, x) -> tuple[np.ndarray, ForwardCache]:
    a, single = _as_batch(m, x)
    cache = ForwardCache(post=[a])
    for i, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = a @ w + b
        last = i == m.n_layers - 1
        a = _output(m.output_activation, z) if last else _hidden(m.hidden_activation, z)
        cache.pre.append(z)
        cache.post.append(a)
    return (a[0] if single else a), cache


def forward(m: Mlp, x) -> np.ndarray:
    return forward_cached(m, x)[0]


def backward(m: Mlp, x, upstream, cache: ForwardCache | None = None,
             hidden_grads: dict[int, np.ndarray] | None = None) -> MlpGradients:
    """
    Reverse-mode gradients of sum(upstream * forward(x)). hidden_grads adds
    extra gradients w.r.t. the activation of hidden layer i (1..n_layers-1),
    which is how a head attached to a hidden layer feeds back.
    """
    xb, single = _as_batch(m, x)
    if cache is None:
        _, cache = forward_cached(m, xb)
    g = np.asarray(upstream, dtype=float)
    g = g[None, :] if g.ndim == 1 else g
    if g.shape != cache.post[-1].shape:
        raise DimensionError(f"upstream gradient has shape {g.shape}, output is {cache.post[-1].shape}")

    dws: list[np.ndarray] = [None] * m.n_layers
    dbs: list[np.ndarray] = [None] * m.n_layers
    for i in reversed(range(m.n_layers)):
        z, a = cache.pre[i], cache.post[i + 1]
        if i == m.n_layers - 1:
            dz = g * _output_grad(m.output_activation, a)
        else:
            dz = g * _hidden_grad(m.hidden_activation, z, a)
        dws[i] = cache.post[i].T @ dz
        dbs[i] = dz.sum(axis=0)
        g = dz @ m.weights[i].T
        if hidden_grads and i in hidden_grads:
            extra = np.asarray(hidden_grads[i], dtype=float)
            if extra.shape != g.shape:
                raise DimensionError(f"hidden gradient for layer {i} has shape {extra.shape}, expected {g.shape}")
            g = g + extra
    return MlpGradients(dws, dbs, g[0] if single else g)


def sgd_step(m: Mlp, grads: MlpGradients, learning_rate: float) -> None:
    for w, b, dw, db in zip(m.weights, m.biases, grads.weights, grads.biases):
        w -= learning_rate * dw
        b -= learning_rate * db


class Sgd:
    def step(self, m: Mlp, grads: MlpGradients, learning_rate: float) -> None:
        sgd_step(m, grads, learning_rate)


class Adam:
    """First and second moment estimates for one network, bias-corrected per step."""

    def __init__(self, m: Mlp, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        params = [*m.weights, *m.biases]
        self._first = [np.zeros_like(p) for p in params]
        self._second = [np.zeros_like(p) for p in params]
        self.steps = 0

    def step(self, m: Mlp, grads: MlpGradients, learning_rate: float) -> None:
        self.steps += 1
        c1 = 1.0 - self.beta1 ** self.steps
        c2 = 1.0 - self.beta2 ** self.steps
        params = [*m.weights, *m.biases]
        for p, g, mom, vel in zip(params, [*grads.weights, *grads.biases], self._first, self._second):
            mom *= self.beta1
            mom += (1.0 - self.beta1) * g
            vel *= self.beta2
            vel += (1.0 - self.beta2) * g * g
            p -= learning_rate * (mom / c1) / (np.sqrt(vel / c2) + self.eps)


def make_optimizer(name: OptimizerName, m: Mlp) -> Sgd | Adam:
    if name == "sgd":
        return Sgd()
    if name == "adam":
        return Adam(m)
    raise InvariantError(f"unknown optimizer {name!r}")


def cosine_rate(base: float, it: int, iterations: int) -> float:
    """base at iteration 0, decaying to 0 at the last iteration."""
    return 0.5 * base * (1.0 + math.cos(math.pi * it / max(iterations, 1)))


# ---------- training ----------
@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    batch_size: int = 32
    iterations: int = 1500
    seed: int = 0
    loss_name: str = "bce"
    kernel_scale: float = 1.0
    floor: float = DEFAULT_FLOOR
    log_every: int = 500

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvariantError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvariantError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations < 0:
            raise InvariantError(f"iterations must be >= 0, got {self.iterations}")
        if self.loss_name not in LOSS_NAMES:
            raise InvariantError(f"unknown loss {self.loss_name!r}")


@dataclass
class TrainResult:
    model: Mlp
    losses: list[float]


class BatchSampler:
    """Seeded shuffle per epoch; yields index batches forever."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._order = np.empty(0, dtype=int)
        self._pos = 0
        self.epoch = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self._order.size:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
            self.epoch += 1
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


def train(m: Mlp, inputs, targets, config: TrainConfig, loss_fn: LossFn | None = None) -> TrainResult:
    """Plain minibatch SGD on a copy of m. Fully determined by config.seed."""
    x = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    y = y[:, None] if y.ndim == 1 else y
    if x.shape[0] == 0:
        raise InvariantError("training set is empty")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"{x.shape[0]} inputs but {y.shape[0]} targets")
    if y.shape[1] != m.layer_sizes[-1]:
        raise DimensionError(f"targets have {y.shape[1]} columns, network outputs {m.layer_sizes[-1]}")
    loss_fn = loss_fn or make_loss(config.loss_name, m.layer_sizes[-1], config.kernel_scale, config.floor)

    model = m.copy()
    sampler = BatchSampler(x.shape[0], config.batch_size, make_rng(derive_seed(config.seed, "train")))
    losses: list[float] = []
    for it in range(config.iterations):
        idx = sampler.next()
        xb, yb = x[idx], y[idx]
        out, cache = forward_cached(model, xb)
        lv = loss_fn(yb, out)
        if not math.isfinite(lv.value) or not np.all(np.isfinite(lv.gradient)):
            raise NumericalError(f"non-finite {config.loss_name} loss at iteration {it} "
                                 f"(lr={config.learning_rate}, batch={config.batch_size})")
        grads = backward(model, xb, lv.gradient, cache=cache)
        sgd_step(model, grads, config.learning_rate)
        losses.append(lv.value)
        if config.log_every and (it + 1) % config.log_every == 0:
            log.info("iteration %d/%d loss %.6f", it + 1, config.iterations, lv.value)
    return TrainResult(model=model, losses=losses)
