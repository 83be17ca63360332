"""
Desk-scale diffusion model on 2D points, conditioned on mixture latent codes.

Every training point carries a fixed latent code Z = [Z_1 A_1, ..., Z_K A_K]:
block k holds code_len draws from a three-component Gaussian mixture when
attribute A_k is on and zeros otherwise. The denoiser is an MLP over
[x_t, time features, Z]. Sampling goes back to x0 at every step:

    x0* = (x_t - sqrt(1 - abar_t) eps_theta) / sqrt(abar_t)
    x_{t-1} = sqrt(abar_{t-1}) x0* + sqrt(1 - abar_{t-1}) eps_fresh
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np

from mixgrad.errors import DimensionError, InvariantError, NumericalError
from mixgrad.losses import DEFAULT_FLOOR, LOSS_NAMES, make_loss, mse
from mixgrad.net import (
    BatchSampler,
    Mlp,
    OptimizerName,
    backward,
    cosine_rate,
    forward,
    forward_cached,
    init_mlp,
    make_optimizer,
)
from mixgrad.seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

TIME_FREQUENCIES = (1, 2, 4, 8)
N_TIME_FEATURES = 1 + 2 * len(TIME_FREQUENCIES)


# ---------- schedule ----------
@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size == 0:
            raise InvariantError("schedule needs at least one beta")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise InvariantError("betas must lie in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        for a in (beta, alpha, alpha_bar):
            a.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def t_max(self) -> int:
        return int(self.beta.size)

    def abar(self, t) -> np.ndarray:
        """alpha_bar at 1-based step(s) t; t = 0 maps to 1."""
        ta = np.asarray(t)
        if np.any(ta < 0) or np.any(ta > self.t_max):
            raise InvariantError(f"step out of range 0..{self.t_max}: {t}")
        padded = np.concatenate(([1.0], self.alpha_bar))
        return padded[ta]


def build_schedule(t_max: int = 100, beta_start: float = 0.001, beta_end: float = 0.2) -> DiffusionSchedule:
    if int(t_max) != t_max or t_max < 1:
        raise InvariantError(f"t_max must be a positive integer, got {t_max}")
    if not (0 < beta_start <= beta_end < 1):
        raise InvariantError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return DiffusionSchedule(np.linspace(beta_start, beta_end, int(t_max)))


def _check_steps(schedule: DiffusionSchedule, t) -> np.ndarray:
    ta = np.asarray(t)
    if not np.issubdtype(ta.dtype, np.integer):
        raise InvariantError(f"diffusion steps must be integers, got {t!r}")
    if np.any(ta < 1) or np.any(ta > schedule.t_max):
        raise InvariantError(f"step out of range 1..{schedule.t_max}: {t}")
    return ta


def _per_row(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    # scalar step or one step per batch row
    return coef if coef.ndim == 0 else coef.reshape((-1,) + (1,) * (x.ndim - 1))


def forward_noise(schedule: DiffusionSchedule, x0, t, eps) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise DimensionError(f"noise shape {eps.shape} differs from data shape {x0.shape}")
    ab = _per_row(schedule.abar(_check_steps(schedule, t)), x0)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_x0(schedule: DiffusionSchedule, x_t, eps_hat, t) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    if x_t.shape != eps_hat.shape:
        raise DimensionError(f"noise estimate shape {eps_hat.shape} differs from x_t shape {x_t.shape}")
    ab = _per_row(schedule.abar(_check_steps(schedule, t)), x_t)
    return (x_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def time_features(t, t_max: int) -> np.ndarray:
    """
    [t/T, sin(f pi/2 t/T), cos(f pi/2 t/T) for f in TIME_FREQUENCIES] per
    step, shape (B, N_TIME_FEATURES).
    """
    s = np.atleast_1d(np.asarray(t, dtype=float)) / float(t_max)
    angles = 0.5 * math.pi * s[:, None] * np.asarray(TIME_FREQUENCIES, dtype=float)
    return np.concatenate([s[:, None], np.sin(angles), np.cos(angles)], axis=1)


# ---------- latents ----------
@dataclass(frozen=True)
class LatentSpec:
    n_features: int
    code_len: int = 8
    component_means: tuple[float, float, float] = (-2.0, 0.0, 2.0)
    component_scale: float = 0.5
    component_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if self.n_features < 1 or self.code_len < 1:
            raise InvariantError("n_features and code_len must be positive")
        if len(self.component_means) != 3 or len(self.component_weights) != 3:
            raise InvariantError("latent mixture has exactly 3 components")
        if not np.allclose(self.component_weights, 1 / 3, rtol=0, atol=1e-12):
            raise InvariantError("latent mixture weights must be uniform")
        if not self.component_scale > 0:
            raise InvariantError(f"component_scale must be > 0, got {self.component_scale}")
        gaps = np.abs(np.subtract.outer(self.component_means, self.component_means))[np.triu_indices(3, 1)]
        if np.any(gaps <= self.component_scale):
            raise InvariantError("component means must be further apart than component_scale")

    @property
    def latent_dim(self) -> int:
        return self.n_features * self.code_len


@dataclass(frozen=True, eq=False)
class LatentCode:
    blocks: np.ndarray
    attributes: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        attrs = np.asarray(self.attributes)
        if blocks.ndim != 2 or attrs.shape != (blocks.shape[0],):
            raise DimensionError(f"blocks {blocks.shape} do not match attributes {attrs.shape}")
        if not np.all(np.isin(attrs, (0, 1))):
            raise InvariantError("attributes must be binary")
        zero_blocks = np.all(blocks == 0, axis=1)
        if np.any(zero_blocks != (attrs == 0)):
            raise InvariantError("a block must be all-zero exactly when its attribute is off")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "attributes", attrs.astype(int))

    @property
    def flat(self) -> np.ndarray:
        return self.blocks.ravel()


def _as_attributes(spec: LatentSpec, attributes) -> np.ndarray:
    a = np.asarray(attributes)
    if a.shape[-1] != spec.n_features:
        raise DimensionError(f"{a.shape[-1]} attributes, latent spec has {spec.n_features} features")
    if not np.all(np.isin(a, (0, 1))):
        raise InvariantError("attributes must be binary")
    return a.astype(int)


def _mixture_draws(spec: LatentSpec, shape, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(3, size=shape, p=np.asarray(spec.component_weights) / np.sum(spec.component_weights))
    draws = rng.normal(np.asarray(spec.component_means)[comp], spec.component_scale)
    # a draw of exactly 0.0 would read as an inactive block
    return np.where(draws == 0.0, np.finfo(float).tiny, draws)


def sample_latent(spec: LatentSpec, attributes, rng: np.random.Generator) -> LatentCode:
    a = _as_attributes(spec, attributes)
    if a.ndim != 1:
        raise DimensionError("sample_latent takes one attribute vector; use sample_latents for batches")
    draws = _mixture_draws(spec, (spec.n_features, spec.code_len), rng)
    return LatentCode(blocks=draws * a[:, None], attributes=a)


def sample_latents(spec: LatentSpec, attributes, rng: np.random.Generator) -> np.ndarray:
    """Flat codes for a batch of attribute rows, shape (B, K * code_len)."""
    a = _as_attributes(spec, np.atleast_2d(attributes))
    draws = _mixture_draws(spec, (a.shape[0], spec.n_features, spec.code_len), rng)
    return (draws * a[:, :, None]).reshape(a.shape[0], spec.latent_dim)


# ---------- denoiser ----------
class NoisePredictor(Protocol):
    data_dim: int

    def predict_eps(self, x_t: np.ndarray, t: np.ndarray, z: np.ndarray) -> np.ndarray: ...


@dataclass
class Denoiser:
    mlp: Mlp
    schedule: DiffusionSchedule
    latent_spec: LatentSpec
    data_dim: int
    bottleneck_layer: int
    head: Mlp | None = None

    def __post_init__(self):
        expected = self.data_dim + N_TIME_FEATURES + self.latent_spec.latent_dim
        if self.mlp.layer_sizes[0] != expected or self.mlp.layer_sizes[-1] != self.data_dim:
            raise DimensionError(f"denoiser layers {self.mlp.layer_sizes} do not fit data_dim={self.data_dim} "
                                 f"and latent_dim={self.latent_spec.latent_dim}")
        if not 1 <= self.bottleneck_layer < self.mlp.n_layers:
            raise InvariantError(f"bottleneck_layer must be a hidden layer, got {self.bottleneck_layer}")
        if self.head is not None:
            if self.head.layer_sizes[0] != self.bottleneck_width:
                raise DimensionError("classifier head input does not match the bottleneck width")
            if self.head.layer_sizes[-1] != self.latent_spec.n_features:
                raise DimensionError("classifier head must output one probability per feature")

    @property
    def bottleneck_width(self) -> int:
        return self.mlp.layer_sizes[self.bottleneck_layer]

    def inputs(self, x_t, t, z) -> np.ndarray:
        x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        t = np.broadcast_to(np.asarray(t), (x_t.shape[0],))
        if z.shape != (x_t.shape[0], self.latent_spec.latent_dim):
            raise DimensionError(f"latent batch {z.shape} does not match x_t batch {x_t.shape}")
        return np.concatenate([x_t, time_features(t, self.schedule.t_max), z], axis=1)

    def predict_eps(self, x_t, t, z) -> np.ndarray:
        return forward(self.mlp, self.inputs(x_t, t, z))

    def bottleneck(self, x_t, t, z) -> np.ndarray:
        _, cache = forward_cached(self.mlp, self.inputs(x_t, t, z))
        return cache.post[self.bottleneck_layer]

    def classify(self, x_t, t, z) -> np.ndarray:
        if self.head is None:
            raise InvariantError("denoiser has no classifier head")
        return classifier_head(self.head, self.bottleneck(x_t, t, z))

    def copy(self) -> "Denoiser":
        return Denoiser(self.mlp.copy(), self.schedule, self.latent_spec, self.data_dim,
                        self.bottleneck_layer, self.head.copy() if self.head is not None else None)


def build_head(bottleneck_width: int, n_features: int, hidden: int = 32, seed: int = 0) -> Mlp:
    """bottleneck -> hidden -> K sigmoid; the last layer starts at zero so outputs start at 0.5."""
    return init_mlp([bottleneck_width, hidden, n_features], "relu", "sigmoid",
                    rng=make_rng(derive_seed(seed, "classifier")), zero_last=True)


def classifier_head(head: Mlp, bottleneck) -> np.ndarray:
    b = np.asarray(bottleneck, dtype=float)
    if b.shape[-1] != head.layer_sizes[0]:
        raise DimensionError(f"bottleneck has width {b.shape[-1]}, head expects {head.layer_sizes[0]}")
    return forward(head, b)


def build_denoiser(data_dim: int, schedule: DiffusionSchedule, latent_spec: LatentSpec,
                   hidden: tuple[int, ...] = (128, 32, 128), activation: str = "relu",
                   with_head: bool = False, head_hidden: int = 32, seed: int = 0) -> Denoiser:
    """The bottleneck is the middle hidden layer."""
    if not hidden:
        raise InvariantError("denoiser needs at least one hidden layer")
    sizes = [data_dim + N_TIME_FEATURES + latent_spec.latent_dim, *hidden, data_dim]
    mlp = init_mlp(sizes, activation, "identity", rng=make_rng(derive_seed(seed, "init")))
    bottleneck = (len(hidden) + 1) // 2
    head = build_head(sizes[bottleneck], latent_spec.n_features, head_hidden, seed) if with_head else None
    return Denoiser(mlp, schedule, latent_spec, data_dim, bottleneck, head)


# ---------- training ----------
@dataclass
class DiffusionDataset:
    x0: np.ndarray
    attributes: np.ndarray
    latents: np.ndarray

    def __post_init__(self):
        self.x0 = np.atleast_2d(np.asarray(self.x0, dtype=float))
        self.attributes = np.atleast_2d(np.asarray(self.attributes)).astype(int)
        self.latents = np.atleast_2d(np.asarray(self.latents, dtype=float))
        n = self.x0.shape[0]
        if n == 0:
            raise InvariantError("diffusion dataset is empty")
        if self.attributes.shape[0] != n or self.latents.shape[0] != n:
            raise DimensionError("x0, attributes and latents must have the same number of rows")

    def __len__(self):
        return int(self.x0.shape[0])


def make_training_set(x0, attributes, spec: LatentSpec, seed: int = 0) -> DiffusionDataset:
    """Pair every point with one latent code drawn once, before training."""
    latents = sample_latents(spec, attributes, make_rng(derive_seed(seed, "latent")))
    return DiffusionDataset(x0, attributes, latents)


@dataclass(frozen=True)
class DiffusionTrainConfig:
    iterations: int = 20000
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: OptimizerName = "adam"
    lr_schedule: Literal["constant", "cosine"] = "cosine"
    seed: int = 0
    lambda_cls: float = 0.1
    cls_loss: str = "bce"
    kernel_scale: float = 1.0
    floor: float = DEFAULT_FLOOR
    # experimental: draw fresh codes at every epoch instead of keeping one per point
    resample_latents_per_epoch: bool = False
    log_every: int = 1000

    def __post_init__(self):
        if self.iterations < 0:
            raise InvariantError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise InvariantError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise InvariantError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.lambda_cls < 0:
            raise InvariantError(f"lambda_cls must be >= 0, got {self.lambda_cls}")
        if self.cls_loss not in LOSS_NAMES:
            raise InvariantError(f"unknown classifier loss {self.cls_loss!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise InvariantError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvariantError(f"lr_schedule must be 'constant' or 'cosine', got {self.lr_schedule!r}")


@dataclass
class DiffusionTrainResult:
    model: Denoiser
    losses: list[float]
    cls_losses: list[float]


def train_denoiser(model: Denoiser, dataset: DiffusionDataset, config: DiffusionTrainConfig) -> DiffusionTrainResult:
    """
    Minimize ||eps - eps_theta(x_t, t, Z)||^2 with t ~ U{1..T}. When the model
    has a head and lambda_cls > 0 the head is trained jointly on the
    bottleneck and its gradient flows back into the denoiser.
    """
    if dataset.x0.shape[1] != model.data_dim:
        raise DimensionError(f"dataset points have dimension {dataset.x0.shape[1]}, model expects {model.data_dim}")
    if dataset.latents.shape[1] != model.latent_spec.latent_dim:
        raise DimensionError("dataset latents do not match the model's latent spec")

    model = model.copy()
    schedule = model.schedule
    sampler = BatchSampler(len(dataset), config.batch_size, make_rng(derive_seed(config.seed, "train")))
    noise_rng = make_rng(derive_seed(config.seed, "train", 1))
    joint = model.head is not None and config.lambda_cls > 0
    cls_fn = make_loss(config.cls_loss, model.latent_spec.n_features, config.kernel_scale, config.floor) if joint else None
    optimizer = make_optimizer(config.optimizer, model.mlp)
    head_optimizer = make_optimizer(config.optimizer, model.head) if joint else None
    latents = dataset.latents
    epoch = 0

    losses: list[float] = []
    cls_losses: list[float] = []
    for it in range(config.iterations):
        idx = sampler.next()
        if config.resample_latents_per_epoch and sampler.epoch != epoch and sampler.epoch > 1:
            latents = sample_latents(model.latent_spec, dataset.attributes,
                                     make_rng(derive_seed(config.seed, "latent", sampler.epoch)))
        epoch = sampler.epoch

        x0 = dataset.x0[idx]
        t = noise_rng.integers(1, schedule.t_max + 1, size=idx.size)
        eps = noise_rng.standard_normal(x0.shape)
        inputs = model.inputs(forward_noise(schedule, x0, t, eps), t, latents[idx])
        out, cache = forward_cached(model.mlp, inputs)
        lv = mse(eps, out)
        total = lv.value

        hidden_grads = None
        if joint:
            bottleneck = cache.post[model.bottleneck_layer]
            probs, head_cache = forward_cached(model.head, bottleneck)
            cv = cls_fn(dataset.attributes[idx].astype(float), probs)
            head_grads = backward(model.head, bottleneck, config.lambda_cls * cv.gradient, cache=head_cache)
            hidden_grads = {model.bottleneck_layer: head_grads.inputs}
            total += config.lambda_cls * cv.value
            cls_losses.append(cv.value)

        if not math.isfinite(total):
            raise NumericalError(f"non-finite denoiser loss at iteration {it}")
        grads = backward(model.mlp, inputs, lv.gradient, cache=cache, hidden_grads=hidden_grads)
        lr = config.learning_rate
        if config.lr_schedule == "cosine":
            lr = cosine_rate(lr, it, config.iterations)
        optimizer.step(model.mlp, grads, lr)
        if joint:
            head_optimizer.step(model.head, head_grads, lr)
        losses.append(lv.value)
        if config.log_every and (it + 1) % config.log_every == 0:
            log.info("denoiser iteration %d/%d loss %.5f", it + 1, config.iterations, lv.value)
    return DiffusionTrainResult(model=model, losses=losses, cls_losses=cls_losses)


def l_simple(model: NoisePredictor, schedule: DiffusionSchedule, dataset: DiffusionDataset,
             rng: np.random.Generator, n_draws: int = 1) -> float:
    """Monte-Carlo estimate of E||eps - eps_theta(x_t, t, Z)||^2 over the dataset."""
    total = 0.0
    for _ in range(n_draws):
        t = rng.integers(1, schedule.t_max + 1, size=len(dataset))
        eps = rng.standard_normal(dataset.x0.shape)
        pred = model.predict_eps(forward_noise(schedule, dataset.x0, t, eps), t, dataset.latents)
        total += float(np.mean(np.sum((eps - pred) ** 2, axis=1)))
    return total / n_draws


# ---------- sampling ----------
def sample(model: NoisePredictor, schedule: DiffusionSchedule, latent, rng: np.random.Generator,
           return_trajectory: bool = False):
    """
    Run the x0-resampling chain from x_T ~ N(0, I). latent is one LatentCode
    or a (B, latent_dim) batch of flat codes; the result is (data_dim,) or
    (B, data_dim). With return_trajectory the x0 estimates of every step
    (T first) come back too.
    """
    single = isinstance(latent, LatentCode)
    z = np.atleast_2d(latent.flat if single else np.asarray(latent, dtype=float))
    x = rng.standard_normal((z.shape[0], model.data_dim))
    trajectory = []
    x0 = x
    for t in range(schedule.t_max, 0, -1):
        steps = np.full(z.shape[0], t)
        eps_hat = model.predict_eps(x, steps, z)
        if not np.all(np.isfinite(eps_hat)):
            raise NumericalError(f"model produced non-finite noise estimate at step {t}")
        x0 = predict_x0(schedule, x, eps_hat, steps)
        if return_trajectory:
            trajectory.append(x0[0].copy() if single else x0.copy())
        if t > 1:
            ab_prev = schedule.abar(t - 1)
            x = math.sqrt(ab_prev) * x0 + math.sqrt(1.0 - ab_prev) * rng.standard_normal(x0.shape)
    out = x0[0] if single else x0
    return (out, trajectory) if return_trajectory else out


# ---------- synthetic data ----------
GRID_FEATURES = 4


def make_grid_dataset(n: int, seed: int = 0, noise: float = 0.08,
                      rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    2D clusters on a 4x4 grid driven by K = 4 overlapping binary features:
    center = (2 A1 + A3, 2 A2 + A4) - 1.5. Returns (points, attributes).
    """
    if n < 1:
        raise InvariantError(f"n must be >= 1, got {n}")
    rng = rng if rng is not None else make_rng(derive_seed(seed, "data"))
    attrs = rng.integers(0, 2, size=(n, GRID_FEATURES))
    return grid_centers(attrs) + noise * rng.standard_normal((n, 2)), attrs


def grid_centers(attributes) -> np.ndarray:
    a = np.atleast_2d(np.asarray(attributes, dtype=float))
    return np.stack([2 * a[:, 0] + a[:, 2], 2 * a[:, 1] + a[:, 3]], axis=1) - 1.5


def collapse_to_classes(attributes) -> np.ndarray:
    """Disjoint class id 2 A1 + A2: keeps the quadrant, forgets the cell within it."""
    a = np.atleast_2d(np.asarray(attributes)).astype(int)
    if a.shape[1] < 2:
        raise DimensionError(f"class ids need at least 2 attributes, got {a.shape[1]}")
    return 2 * a[:, 0] + a[:, 1]


def encode_classes(classes, n_classes: int = GRID_FEATURES) -> np.ndarray:
    c = np.asarray(classes).astype(int)
    if np.any(c < 0) or np.any(c >= n_classes):
        raise InvariantError(f"class ids must lie in 0..{n_classes - 1}")
    return np.eye(n_classes, dtype=int)[c]
