# mixgrad/cli/commands/experiments.py
from typing import Optional

from mixgrad.cli.runs import Command, PathInput, Run, config_arg, parse_inputs, path_arg
from mixgrad.documents import write_rows
from mixgrad.experiments import (
    FeatureVsClassConfig,
    NgmgVsBceConfig,
    run_feature_vs_class,
    run_ngmg_vs_bce,
)
from mixgrad.plots import emit_plot


class ExperimentInput(PathInput):
    summary: Optional[str] = None
    trials: Optional[str] = None
    plot: Optional[str] = None


def _common_arguments(p):
    path_arg(p, "--summary", "summary CSV (default <run dir>/summary.csv)")
    path_arg(p, "--trials", "per-trial CSV (default <run dir>/trials.csv)")
    path_arg(p, "--plot", "SVG (default <run dir>/<experiment>.svg)")
    config_arg(p, "--workers", "experiment.workers", "parallel trial processes", type=int)


def _report(rows: list[dict]) -> None:
    for row in rows:
        print("\t".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))


# ---------- feature-vs-class ----------
def add_feature_vs_class_arguments(p):
    _common_arguments(p)
    config_arg(p, "--n-seeds", "experiment.n_seeds", "paired seeds", type=int)
    config_arg(p, "--iterations", "diffusion.iterations", "denoiser training iterations per arm", type=int)
    config_arg(p, "--n-generated", "experiment.n_generated", "generated points per arm", type=int)
    config_arg(p, "--class-labeling", "experiment.class_labeling",
               "labeling of the second arm ('features' runs the identical-arms control)",
               choices=["classes", "features"])


def feature_vs_class_run(r: Run) -> None:
    body = parse_inputs(ExperimentInput, r)
    d, e = r.config.diffusion, r.config.experiment
    result = run_feature_vs_class(FeatureVsClassConfig(
        n_seeds=e.n_seeds, seed=r.config.seed, n_train=d.n_train, n_held_out=e.n_held_out,
        n_reference=e.n_reference, n_generated=e.n_generated, noise=d.noise, iterations=d.iterations,
        batch_size=d.batch_size, learning_rate=d.learning_rate, optimizer=d.optimizer, lr_schedule=d.lr_schedule,
        t_max=d.t_max, beta_start=d.beta_start, beta_end=d.beta_end, hidden=tuple(d.hidden), code_len=d.code_len,
        quantile=e.quantile, class_labeling=e.class_labeling,
    ), workers=e.workers)

    summary = result.summary_rows()
    _report(summary)
    r.wrote(write_rows(summary, r.path("summary", "summary.csv")))
    r.wrote(write_rows(result.trial_rows(), r.path("trials", "trials.csv")))
    trials = [t.trial for t in result.trials]
    r.wrote(emit_plot(
        {"feature codes": (trials, [t.feature.defect_rate for t in result.trials]),
         "class codes": (trials, [t.klass.defect_rate for t in result.trials])},
        r.path("plot", "feature-vs-class.svg"), title="defect rate per seed", xlabel="trial",
        ylabel="defect rate",
    ))


feature_vs_class_command = Command(name="feature-vs-class", help="feature vs class latent conditioning",
                                   add_arguments=add_feature_vs_class_arguments, run=feature_vs_class_run)


# ---------- ngmg-vs-bce ----------
def add_ngmg_vs_bce_arguments(p):
    _common_arguments(p)
    config_arg(p, "--n-trials", "experiment.n_trials", "matched trials", type=int)
    config_arg(p, "--iterations", "train.iterations", "SGD iterations per arm", type=int)
    config_arg(p, "--lr", "train.learning_rate", "learning rate", type=float)


def ngmg_vs_bce_run(r: Run) -> None:
    body = parse_inputs(ExperimentInput, r)
    t, e = r.config.train, r.config.experiment
    config = NgmgVsBceConfig(
        n_trials=e.n_trials, iterations=t.iterations, seed=r.config.seed, n_samples=t.n_samples,
        n_features=t.n_features, test_fraction=e.test_fraction, test_batch_size=e.test_batch_size,
        hidden=tuple(t.hidden), learning_rate=t.learning_rate, batch_size=t.batch_size,
        kernel_scale=t.kernel_scale, floor=t.floor,
    )
    result = run_ngmg_vs_bce(config, workers=e.workers)

    summary = result.summary_rows()
    _report(summary)
    r.wrote(write_rows(summary, r.path("summary", "summary.csv")))
    r.wrote(write_rows(result.trial_rows(), r.path("trials", "trials.csv")))
    if config.iterations > 0:
        r.wrote(emit_plot({arm: result.mean_curve(arm) for arm in config.arms},
                          r.path("plot", "ngmg-vs-bce.svg"), title=f"mean training loss over {e.n_trials} trials",
                          xlabel="iteration", ylabel="loss", log_y=True))


ngmg_vs_bce_command = Command(name="ngmg-vs-bce", help="NGMG entropy vs BCE on the multi-label classifier",
                              add_arguments=add_ngmg_vs_bce_arguments, run=ngmg_vs_bce_run)

EXPERIMENTS = [feature_vs_class_command, ngmg_vs_bce_command]
