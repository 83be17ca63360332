# mixgrad/cli/commands/diffusion.py
import argparse
import logging
from typing import Optional

import numpy as np

from mixgrad.cli.commands._shared import parse_features
from mixgrad.cli.runs import Command, PathInput, Run, config_arg, parse_inputs, path_arg
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
from mixgrad.documents import (
    load_denoiser,
    read_attribute_table,
    save_denoiser,
    write_attribute_table,
    write_rows,
)
from mixgrad.errors import DimensionError
from mixgrad.losses import LOSS_NAMES
from mixgrad.plots import emit_plot
from mixgrad.seeding import derive_seed, make_rng

log = logging.getLogger(__name__)


class TrainDiffusionInput(PathInput):
    data: Optional[str] = None
    out: Optional[str] = None
    losses: Optional[str] = None
    plot: Optional[str] = None


class SampleInput(PathInput):
    model: str
    features: str = ""
    out: Optional[str] = None
    trajectory: Optional[str] = None


# ---------- train-diffusion ----------
def add_train_arguments(p):
    path_arg(p, "--data", "CSV with x, y, A1..AK (default: generated grid data)")
    path_arg(p, "--out", "denoiser document (default <run dir>/denoiser.json)")
    path_arg(p, "--losses", "loss curve CSV (default <run dir>/losses.csv)")
    path_arg(p, "--plot", "SVG of the loss curve")
    config_arg(p, "--iterations", "diffusion.iterations", "training iterations", type=int)
    config_arg(p, "--lr", "diffusion.learning_rate", "learning rate", type=float)
    config_arg(p, "--optimizer", "diffusion.optimizer", "denoiser optimizer", choices=["adam", "sgd"])
    config_arg(p, "--batch-size", "diffusion.batch_size", "minibatch size", type=int)
    config_arg(p, "--t-max", "diffusion.t_max", "diffusion steps T", type=int)
    config_arg(p, "--labeling", "diffusion.labeling", "condition on features or collapsed classes",
               choices=["features", "classes"])
    config_arg(p, "--with-head", "diffusion.with_head", "attach a classifier head to the bottleneck",
               action="store_true")
    config_arg(p, "--lambda-cls", "diffusion.lambda_cls", "classifier loss weight", type=float)
    config_arg(p, "--cls-loss", "diffusion.cls_loss", "classifier loss",
               choices=[n for n in LOSS_NAMES if n != "mse"])


def _labels(r: Run, attributes) -> np.ndarray:
    if r.config.diffusion.labeling == "classes":
        return encode_classes(collapse_to_classes(attributes), GRID_FEATURES)
    return attributes


def train_run(r: Run) -> None:
    body = parse_inputs(TrainDiffusionInput, r)
    cfg = r.config.diffusion
    seed = r.config.seed
    if body.data:
        points, attrs = read_attribute_table(body.data)
    else:
        points, attrs = make_grid_dataset(cfg.n_train, seed=seed, noise=cfg.noise)
        r.wrote(write_attribute_table(points, attrs, r.directory / "data.csv"))

    labels = _labels(r, attrs)
    spec = LatentSpec(n_features=labels.shape[1], code_len=cfg.code_len)
    schedule = build_schedule(cfg.t_max, cfg.beta_start, cfg.beta_end)
    model = build_denoiser(points.shape[1], schedule, spec, tuple(cfg.hidden),
                           with_head=cfg.with_head, seed=seed)
    result = train_denoiser(model, make_training_set(points, labels, spec, seed=seed), DiffusionTrainConfig(
        iterations=cfg.iterations, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
        optimizer=cfg.optimizer, lr_schedule=cfg.lr_schedule, seed=seed,
        lambda_cls=cfg.lambda_cls, cls_loss=cfg.cls_loss,
        resample_latents_per_epoch=cfg.resample_latents_per_epoch,
    ))
    if result.losses:
        print(f"final_loss\t{result.losses[-1]:.12g}")

    r.wrote(save_denoiser(result.model, r.path("out", "denoiser.json")))
    rows = [{"iter": i + 1, "loss": v} for i, v in enumerate(result.losses)]
    r.wrote(write_rows(rows, r.path("losses", "losses.csv"), columns=["iter", "loss"]))
    if body.plot and result.losses:
        series = {"L_simple": result.losses}
        if result.cls_losses:
            series["classifier"] = result.cls_losses
        r.wrote(emit_plot(series, body.plot, title="denoiser training", xlabel="iteration",
                          ylabel="loss", log_y=True))


train_command = Command(name="train-diffusion", help="train the latent-conditioned denoiser",
                        add_arguments=add_train_arguments, run=train_run)


# ---------- sample ----------
def add_sample_arguments(p):
    path_arg(p, "--model", "denoiser document")
    path_arg(p, "--out", "generated points CSV x, y, A1..AK (default <run dir>/samples.csv)")
    path_arg(p, "--trajectory", "CSV of the first chain's x0 estimate at every step")
    p.add_argument("--features", dest="paths.features", default=argparse.SUPPRESS, metavar="NAMES",
                   help="active attributes, e.g. A1,A3 (default: none)")
    config_arg(p, "--n", "diffusion.n_samples", "number of independent chains", type=int)


def sample_run(r: Run) -> None:
    body = parse_inputs(SampleInput, r)
    model = load_denoiser(body.model)
    spec = model.latent_spec
    attrs = np.tile(parse_features(body.features, spec.n_features), (r.config.diffusion.n_samples, 1))
    seed = r.config.seed
    z = sample_latents(spec, attrs, make_rng(derive_seed(seed, "sample", 1)))
    points, trajectory = sample(model, model.schedule, z, make_rng(derive_seed(seed, "sample", 2)),
                                return_trajectory=True)
    if points.shape[1] != 2:
        raise DimensionError(f"sample writes 2D points, model generates {points.shape[1]}-D data")
    log.info("generated %d points conditioned on %s", points.shape[0], body.features or "no attributes")

    r.wrote(write_attribute_table(points, attrs, r.path("out", "samples.csv")))
    if body.trajectory:
        rows = [{"step": model.schedule.t_max - i, "x": float(x0[0, 0]), "y": float(x0[0, 1])}
                for i, x0 in enumerate(trajectory)]
        r.wrote(write_rows(rows, body.trajectory, columns=["step", "x", "y"]))


sample_command = Command(name="sample", help="generate points from a trained denoiser",
                         add_arguments=add_sample_arguments, run=sample_run)
