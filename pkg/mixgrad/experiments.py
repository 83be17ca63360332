"""
Comparative studies.

feature-vs-class
    Two diffusion models on the same 2D grid data, identical except for the
    latent conditioning: overlapping feature codes versus collapsed disjoint
    class codes. Compared by the share of generated points that fall outside
    the real support (nearest-neighbour distance to a dense reference > tau).
ngmg-vs-bce
    A small multi-label classifier trained with BCE and with two-sided NGMG
    entropy from the same initial weights, compared by held-out squared error.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from mixgrad.diffusion import (
    GRID_FEATURES,
    DiffusionTrainConfig,
    LatentSpec,
    build_denoiser,
    build_schedule,
    collapse_to_classes,
    encode_classes,
    make_grid_dataset,
    make_training_set,
    sample,
    sample_latents,
    train_denoiser,
)
from mixgrad.errors import ConfigError, DimensionError, InvariantError
from mixgrad.losses import DEFAULT_FLOOR
from mixgrad.net import TrainConfig, forward, init_mlp, train
from mixgrad.seeding import derive_seed, make_rng, trial_seed

log = logging.getLogger(__name__)


# ---------- statistics ----------
@dataclass(frozen=True)
class Summary:
    mean: float
    stderr: float
    n: int


def summarize(values) -> Summary:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvariantError("cannot summarize an empty series")
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return Summary(mean=float(v.mean()), stderr=se, n=int(v.size))


def sign_test(wins: int, n: int) -> float:
    """One-sided p-value for 'wins out of n non-tied pairs' under a fair coin."""
    if n == 0:
        return 1.0
    return float(stats.binomtest(int(wins), int(n), 0.5, alternative="greater").pvalue)


# ---------- defect rate ----------
@dataclass(frozen=True)
class ConditionDefects:
    n_samples: int
    n_defects: int
    defect_rate: float


@dataclass(frozen=True)
class DefectReport:
    n_samples: int
    n_defects: int
    defect_rate: float
    tau: float
    per_condition: dict[str, ConditionDefects] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 1 or not 0 <= self.n_defects <= self.n_samples:
            raise InvariantError("defect counts out of range")
        if self.defect_rate != self.n_defects / self.n_samples:
            raise InvariantError("defect_rate must equal n_defects / n_samples")


def _points(x, name: str) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    p = p[:, None] if p.ndim == 1 else p
    if p.ndim != 2 or p.shape[0] == 0:
        raise InvariantError(f"{name} must be a non-empty point set")
    return p


def nearest_distances(points, reference) -> np.ndarray:
    ref = _points(reference, "reference support")
    pts = _points(points, "points")
    if pts.shape[1] != ref.shape[1]:
        raise DimensionError(f"points are {pts.shape[1]}-D, reference is {ref.shape[1]}-D")
    d, _ = cKDTree(ref).query(pts, k=1)
    return d


def defect_rate(generated, reference_support, tau: float, conditions=None) -> DefectReport:
    """A generated point is a defect iff its nearest reference point is further than tau."""
    if not tau > 0:
        raise InvariantError(f"tau must be > 0, got {tau}")
    defects = nearest_distances(generated, reference_support) > tau
    n = int(defects.size)

    breakdown = {}
    if conditions is not None:
        labels = np.asarray(conditions).astype(str)
        if labels.shape != (n,):
            raise DimensionError(f"{labels.size} condition labels for {n} generated points")
        for label in np.unique(labels):
            sel = defects[labels == label]
            breakdown[str(label)] = ConditionDefects(int(sel.size), int(sel.sum()), int(sel.sum()) / int(sel.size))

    k = int(defects.sum())
    return DefectReport(n_samples=n, n_defects=k, defect_rate=k / n, tau=float(tau), per_condition=breakdown)


def reference_tau(reference, held_out, quantile: float = 0.95) -> float:
    """Quantile of held-out real points' nearest-neighbour distances to the reference."""
    if not 0 < quantile <= 1:
        raise InvariantError(f"quantile must lie in (0, 1], got {quantile}")
    tau = float(np.quantile(nearest_distances(held_out, reference), quantile))
    if not tau > 0:
        raise InvariantError("held-out points coincide with the reference; tau would be 0")
    return tau


# ---------- feature vs class ----------
@dataclass(frozen=True)
class FeatureVsClassConfig:
    n_seeds: int = 5
    seed: int = 0
    n_train: int = 2000
    n_held_out: int = 500
    n_reference: int = 20000
    n_generated: int = 1000
    noise: float = 0.08
    iterations: int = 20000
    batch_size: int = 128
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    lr_schedule: str = "cosine"
    t_max: int = 100
    beta_start: float = 0.001
    beta_end: float = 0.2
    hidden: tuple[int, ...] = (128, 32, 128)
    code_len: int = 8
    quantile: float = 0.95
    # "features" runs the control: both arms use the feature labeling
    class_labeling: str = "classes"

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ConfigError(f"n_seeds must be >= 1, got {self.n_seeds}")
        if min(self.n_train, self.n_held_out, self.n_reference, self.n_generated) < 1:
            raise ConfigError("dataset sizes must be positive")
        if self.class_labeling not in ("classes", "features"):
            raise ConfigError(f"class_labeling must be 'classes' or 'features', got {self.class_labeling!r}")


@dataclass(frozen=True)
class FeatureVsClassTrial:
    trial: int
    seed: int
    tau: float
    feature: DefectReport
    klass: DefectReport


@dataclass
class FeatureVsClassResult:
    config: FeatureVsClassConfig
    trials: list[FeatureVsClassTrial]

    @property
    def feature_summary(self) -> Summary:
        return summarize([t.feature.defect_rate for t in self.trials])

    @property
    def class_summary(self) -> Summary:
        return summarize([t.klass.defect_rate for t in self.trials])

    @property
    def wins(self) -> tuple[int, int]:
        """(seeds where features beat classes, non-tied seeds)"""
        diffs = [t.klass.defect_rate - t.feature.defect_rate for t in self.trials]
        return sum(d > 0 for d in diffs), sum(d != 0 for d in diffs)

    @property
    def p_value(self) -> float:
        return sign_test(*self.wins)

    def trial_rows(self) -> list[dict]:
        return [
            {"trial": t.trial, "seed": t.seed, "tau": t.tau,
             "feature_defect_rate": t.feature.defect_rate, "class_defect_rate": t.klass.defect_rate,
             "feature_defects": t.feature.n_defects, "class_defects": t.klass.n_defects,
             "n_generated": t.feature.n_samples}
            for t in self.trials
        ]

    def summary_rows(self) -> list[dict]:
        wins, n = self.wins
        rows = []
        for arm, s in (("feature", self.feature_summary), ("class", self.class_summary)):
            rows.append({"arm": arm, "mean_defect_rate": s.mean, "stderr": s.stderr, "n_seeds": s.n,
                         "wins": wins, "non_tied": n, "sign_test_p": self.p_value})
        return rows


def _condition_labels(attributes) -> np.ndarray:
    return np.array(["".join(str(v) for v in row) for row in np.asarray(attributes, dtype=int)])


def _run_arm(config: FeatureVsClassConfig, seed: int, points, attributes, gen_attributes,
             reference, tau: float, conditions) -> tuple[DefectReport, int]:
    spec = LatentSpec(n_features=attributes.shape[1], code_len=config.code_len)
    schedule = build_schedule(config.t_max, config.beta_start, config.beta_end)
    model = build_denoiser(points.shape[1], schedule, spec, tuple(config.hidden), seed=seed)
    dataset = make_training_set(points, attributes, spec, seed=seed)
    trained = train_denoiser(model, dataset, DiffusionTrainConfig(
        iterations=config.iterations, batch_size=config.batch_size, learning_rate=config.learning_rate,
        optimizer=config.optimizer, lr_schedule=config.lr_schedule, seed=seed,
    )).model
    z = sample_latents(spec, gen_attributes, make_rng(derive_seed(seed, "sample", 1)))
    generated = sample(trained, schedule, z, make_rng(derive_seed(seed, "sample", 2)))
    return defect_rate(generated, reference, tau, conditions), trained.mlp.n_parameters


def _class_view(config: FeatureVsClassConfig, attributes) -> np.ndarray:
    if config.class_labeling == "features":
        return np.asarray(attributes)
    return encode_classes(collapse_to_classes(attributes), GRID_FEATURES)


def run_feature_vs_class_trial(config: FeatureVsClassConfig, trial: int) -> FeatureVsClassTrial:
    seed = trial_seed(config.seed, trial)
    points, attrs = make_grid_dataset(config.n_train, seed=seed, noise=config.noise)
    held_out, _ = make_grid_dataset(config.n_held_out, noise=config.noise,
                                    rng=make_rng(derive_seed(seed, "eval", 0)))
    reference, _ = make_grid_dataset(config.n_reference, noise=config.noise,
                                     rng=make_rng(derive_seed(seed, "eval", 1)))
    tau = reference_tau(reference, held_out, config.quantile)

    gen_attrs = make_rng(derive_seed(seed, "sample", 0)).integers(0, 2, size=(config.n_generated, GRID_FEATURES))
    conditions = _condition_labels(gen_attrs)
    feature, n_feature = _run_arm(config, seed, points, attrs, gen_attrs, reference, tau, conditions)
    klass, n_class = _run_arm(config, seed, points, _class_view(config, attrs), _class_view(config, gen_attrs),
                              reference, tau, conditions)
    if n_feature != n_class:
        raise ConfigError(f"arms differ in parameter count ({n_feature} vs {n_class})")
    log.info("trial %d seed %d: feature %.4f class %.4f (tau %.4f)",
             trial, seed, feature.defect_rate, klass.defect_rate, tau)
    return FeatureVsClassTrial(trial, seed, tau, feature, klass)


def _map_trials(fn, config, n_trials: int, workers: int) -> list:
    if workers <= 1:
        return [fn(config, i) for i in range(n_trials)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, [config] * n_trials, range(n_trials)))


def run_feature_vs_class(config: FeatureVsClassConfig, workers: int = 1) -> FeatureVsClassResult:
    trials = _map_trials(run_feature_vs_class_trial, config, config.n_seeds, workers)
    result = FeatureVsClassResult(config, trials)
    wins, n = result.wins
    log.info("feature-vs-class: feature %.4f±%.4f class %.4f±%.4f, %d/%d wins (p=%.3g)",
             result.feature_summary.mean, result.feature_summary.stderr,
             result.class_summary.mean, result.class_summary.stderr, wins, n, result.p_value)
    return result


# ---------- ngmg vs bce ----------
def make_threshold_dataset(n: int, n_features: int = 4, seed: int = 0,
                           rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """
    Scalar x ~ U(0, 1); attribute k is on when x exceeds (k + 1) / (K + 1).
    Neighbouring attributes disagree only on a thin band of x.
    """
    if n < 1 or n_features < 2:
        raise InvariantError("need n >= 1 and n_features >= 2")
    rng = rng if rng is not None else make_rng(derive_seed(seed, "data"))
    x = rng.uniform(0.0, 1.0, size=(n, 1))
    thresholds = np.arange(1, n_features + 1) / (n_features + 1)
    return x, (x > thresholds[None, :]).astype(float)


@dataclass(frozen=True)
class NgmgVsBceConfig:
    n_trials: int = 20
    iterations: int = 1500
    seed: int = 0
    n_samples: int = 1000
    n_features: int = 4
    test_fraction: float = 0.2
    test_batch_size: int = 64
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 0.5
    batch_size: int = 32
    kernel_scale: float = 1.0
    floor: float = DEFAULT_FLOOR
    arms: tuple[str, ...] = ("bce", "ngmg_two_sided")

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if len(self.arms) != 2 or self.arms[0] == self.arms[1]:
            raise ConfigError(f"need two distinct arms, got {self.arms}")


@dataclass(frozen=True)
class TrialSummary:
    trial: int
    seed: int
    loss_name: str
    test_mse: float
    test_batch_sse: float
    final_loss: float
    losses: tuple[float, ...] = ()

    def __post_init__(self):
        if not (self.test_mse >= 0 and self.test_batch_sse >= 0):
            raise InvariantError("test errors must be non-negative")

    def row(self) -> dict:
        row = asdict(self)
        row.pop("losses")
        return row


def _test_errors(pred: np.ndarray, y: np.ndarray, batch_size: int) -> tuple[float, float]:
    sq = (pred - y) ** 2
    batch_sse = [float(sq[i:i + batch_size].sum()) for i in range(0, sq.shape[0], batch_size)]
    return float(sq.mean()), float(np.mean(batch_sse))


def run_ngmg_vs_bce_trial(config: NgmgVsBceConfig, trial: int) -> list[TrialSummary]:
    seed = trial_seed(config.seed, trial)
    x, y = make_threshold_dataset(config.n_samples, config.n_features, seed=seed)
    order = make_rng(derive_seed(seed, "eval")).permutation(x.shape[0])
    n_test = max(1, int(round(config.test_fraction * x.shape[0])))
    test, tr = order[:n_test], order[n_test:]
    if tr.size == 0:
        raise ConfigError("test split leaves no training data")

    init = init_mlp([1, *config.hidden, config.n_features], "relu", "sigmoid", seed=seed)
    out = []
    for arm in config.arms:
        result = train(init, x[tr], y[tr], TrainConfig(
            learning_rate=config.learning_rate, batch_size=config.batch_size,
            iterations=config.iterations, seed=seed, loss_name=arm,
            kernel_scale=config.kernel_scale, floor=config.floor, log_every=0,
        ))
        mse, batch_sse = _test_errors(forward(result.model, x[test]), y[test], config.test_batch_size)
        out.append(TrialSummary(trial, seed, arm, mse, batch_sse,
                                result.losses[-1] if result.losses else float("nan"), tuple(result.losses)))
    return out


@dataclass
class NgmgVsBceResult:
    config: NgmgVsBceConfig
    trials: dict[str, list[TrialSummary]]

    def summary(self, arm: str) -> Summary:
        return summarize([t.test_mse for t in self.trials[arm]])

    @property
    def wins(self) -> tuple[int, int]:
        """(trials where the second arm has lower test MSE, non-tied trials)"""
        first, second = self.config.arms
        diffs = [a.test_mse - b.test_mse for a, b in zip(self.trials[first], self.trials[second])]
        return sum(d > 0 for d in diffs), sum(d != 0 for d in diffs)

    @property
    def p_value(self) -> float:
        return sign_test(*self.wins)

    def mean_curve(self, arm: str) -> np.ndarray:
        return np.mean([t.losses for t in self.trials[arm]], axis=0)

    def trial_rows(self) -> list[dict]:
        return [t.row() for arm in self.config.arms for t in self.trials[arm]]

    def summary_rows(self) -> list[dict]:
        wins, n = self.wins
        rows = []
        for arm in self.config.arms:
            s = self.summary(arm)
            batch = summarize([t.test_batch_sse for t in self.trials[arm]])
            rows.append({"loss_name": arm, "mean_test_mse": s.mean, "stderr": s.stderr,
                         "mean_test_batch_sse": batch.mean, "n_trials": s.n,
                         "wins": wins, "non_tied": n, "sign_test_p": self.p_value})
        return rows


def run_ngmg_vs_bce(config: NgmgVsBceConfig, workers: int = 1) -> NgmgVsBceResult:
    per_trial = _map_trials(run_ngmg_vs_bce_trial, config, config.n_trials, workers)
    trials = {arm: [summaries[i] for summaries in per_trial] for i, arm in enumerate(config.arms)}
    result = NgmgVsBceResult(config, trials)
    for arm in config.arms:
        s = result.summary(arm)
        log.info("%s: test mse %.5f ± %.5f over %d trials", arm, s.mean, s.stderr, s.n)
    return result
