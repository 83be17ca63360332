# mixgrad/cli/commands/w1.py
import math
from typing import Optional

import pandas as pd

from mixgrad.basis import sample_mixture
from mixgrad.cli.commands._shared import load_weights, resolve_basis
from mixgrad.cli.runs import Command, PathInput, Run, config_arg, parse_inputs, path_arg
from mixgrad.documents import read_samples, write_rows
from mixgrad.errors import ConfigError
from mixgrad.metrics import w1_empirical, w1_integral, w1_vectorized
from mixgrad.seeding import rng_for

COLUMNS = ["integral", "vectorized", "empirical"]


class W1Input(PathInput):
    p: Optional[str] = None
    q: Optional[str] = None
    basis: Optional[str] = None
    samples_p: Optional[str] = None
    samples_q: Optional[str] = None
    out: Optional[str] = None


def add_arguments(p):
    path_arg(p, "--p", "first weights document")
    path_arg(p, "--q", "second weights document")
    path_arg(p, "--basis", "basis document (default: the one embedded in the weights)")
    path_arg(p, "--samples-p", "scalar samples for the empirical distance (default: drawn from --p)")
    path_arg(p, "--samples-q", "scalar samples for the empirical distance (default: drawn from --q)")
    path_arg(p, "--out", "CSV with columns integral,vectorized,empirical (default <run dir>/w1.csv)")
    config_arg(p, "--n-samples", "w1.n_samples", "draws per side for the empirical estimate", type=int)


def run(r: Run) -> None:
    body = parse_inputs(W1Input, r)
    if bool(body.p) != bool(body.q) or bool(body.samples_p) != bool(body.samples_q):
        raise ConfigError("w1: inputs come in pairs (--p with --q, --samples-p with --samples-q)")
    if not body.p and not body.samples_p:
        raise ConfigError("w1: give --p/--q weights or --samples-p/--samples-q")

    row = dict.fromkeys(COLUMNS, math.nan)
    if body.p:
        p, p_basis = load_weights(body.p)
        q, q_basis = load_weights(body.q)
        basis = resolve_basis(body.basis, p_basis, q_basis)
        row["integral"] = w1_integral(basis, p, q)
        row["vectorized"] = w1_vectorized(basis, p, q)
    if body.samples_p:
        row["empirical"] = w1_empirical(read_samples(body.samples_p), read_samples(body.samples_q))
    else:
        rng = rng_for(r.config.seed, "eval")
        n = r.config.w1.n_samples
        row["empirical"] = w1_empirical(sample_mixture(basis, p, n, rng), sample_mixture(basis, q, n, rng))

    print(pd.DataFrame([row], columns=COLUMNS).to_csv(index=False, float_format="%.12g"), end="")
    r.wrote(write_rows([row], r.path("out", "w1.csv"), columns=COLUMNS))


command = Command(name="w1", help="1-Wasserstein distance between weight vectors or samples",
                  add_arguments=add_arguments, run=run)
