# mixgrad/cli/commands/train_mlp.py
from typing import Optional

from mixgrad.cli.runs import Command, PathInput, Run, config_arg, parse_inputs, path_arg
from mixgrad.documents import read_attribute_table, save_mlp, write_attribute_table, write_rows
from mixgrad.experiments import make_threshold_dataset
from mixgrad.losses import LOSS_NAMES
from mixgrad.net import TrainConfig, init_mlp, train
from mixgrad.plots import emit_plot


class TrainMlpInput(PathInput):
    data: Optional[str] = None
    out: Optional[str] = None
    losses: Optional[str] = None
    plot: Optional[str] = None


def add_arguments(p):
    path_arg(p, "--data", "CSV with input columns then A1..AK (default: generated threshold data)")
    path_arg(p, "--out", "model document (default <run dir>/mlp.json)")
    path_arg(p, "--losses", "loss curve CSV (default <run dir>/losses.csv)")
    path_arg(p, "--plot", "SVG of the loss curve")
    config_arg(p, "--loss", "train.loss_name", "training loss",
               choices=LOSS_NAMES)
    config_arg(p, "--iterations", "train.iterations", "SGD iterations", type=int)
    config_arg(p, "--lr", "train.learning_rate", "learning rate", type=float)
    config_arg(p, "--batch-size", "train.batch_size", "minibatch size", type=int)
    config_arg(p, "--hidden", "train.hidden", "hidden layer widths", type=int, nargs="+")


def run(r: Run) -> None:
    body = parse_inputs(TrainMlpInput, r)
    cfg = r.config.train
    if body.data:
        x, y = read_attribute_table(body.data)
    else:
        x, y = make_threshold_dataset(cfg.n_samples, cfg.n_features, seed=r.config.seed)
        r.wrote(write_attribute_table(x, y, r.directory / "data.csv"))

    model = init_mlp([x.shape[1], *cfg.hidden, y.shape[1]], cfg.hidden_activation, "sigmoid", seed=r.config.seed)
    result = train(model, x, y, TrainConfig(
        learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, iterations=cfg.iterations,
        seed=r.config.seed, loss_name=cfg.loss_name, kernel_scale=cfg.kernel_scale, floor=cfg.floor,
    ))
    if result.losses:
        print(f"final_loss\t{result.losses[-1]:.12g}")

    r.wrote(save_mlp(result.model, r.path("out", "mlp.json")))
    rows = [{"iter": i + 1, "loss": v} for i, v in enumerate(result.losses)]
    r.wrote(write_rows(rows, r.path("losses", "losses.csv"), columns=["iter", "loss"]))
    if body.plot and result.losses:
        r.wrote(emit_plot({cfg.loss_name: result.losses}, body.plot,
                          title="training loss", xlabel="iteration", ylabel="loss"))


command = Command(name="train-mlp", help="train the multi-label classifier network",
                  add_arguments=add_arguments, run=run)
