# mixgrad/cli/commands/fit.py
import logging
from typing import Optional

import numpy as np

from mixgrad.basis import build_basis, fit_weights
from mixgrad.cli.runs import Command, PathInput, Run, config_arg, parse_inputs, path_arg
from mixgrad.documents import BasisDoc, WeightsDoc, read_samples, save_doc

log = logging.getLogger(__name__)


class FitInput(PathInput):
    data: str
    out: Optional[str] = None
    basis_out: Optional[str] = None


def add_arguments(p):
    path_arg(p, "--data", "scalar samples, one per line (commas/whitespace also accepted)")
    path_arg(p, "--out", "weights document (default <run dir>/weights.json)")
    path_arg(p, "--basis-out", "basis document (default <out>.basis.json)")
    config_arg(p, "--n", "basis.n_components", "number of components N", type=int)
    config_arg(p, "--sigma", "basis.sigma", "component scale (default: spacing)", type=float)
    config_arg(p, "--support-pad", "basis.support_pad", "support padding in units of sigma", type=float)


def run(r: Run) -> None:
    body = parse_inputs(FitInput, r)
    cfg = r.config.basis
    data = read_samples(body.data)
    basis = build_basis(cfg.n_components, float(np.min(data)), float(np.max(data)),
                        scale=cfg.sigma, support_pad=cfg.support_pad, quad_points=cfg.quad_points)
    weights = fit_weights(basis, data)
    log.info("fitted N=%d sigma=%g to %d samples", basis.n_components, basis.scale, data.size)

    out = r.path("out", "weights.json")
    r.wrote(save_doc(WeightsDoc.from_weights(weights, basis), out))
    basis_out = body.basis_out or f"{out}.basis.json"
    r.wrote(save_doc(BasisDoc.from_basis(basis), basis_out))


command = Command(name="fit", help="fit expansion weights to scalar data", add_arguments=add_arguments, run=run)
