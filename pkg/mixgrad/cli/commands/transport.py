# mixgrad/cli/commands/transport.py
from typing import Optional

from mixgrad.basis import initial_weights
from mixgrad.cli.commands._shared import load_weights, resolve_basis
from mixgrad.cli.runs import Command, PathInput, Run, config_arg, parse_inputs, path_arg
from mixgrad.documents import WeightsDoc, read_samples, save_doc, write_rows
from mixgrad.errors import ConfigError
from mixgrad.plots import emit_plot
from mixgrad.transport import TransportConfig, learn_density, transport

TRACE_COLUMNS = ["iter", "w1", "ngmg_norm"]


class TransportInput(PathInput):
    target: Optional[str] = None
    data: Optional[str] = None
    init: Optional[str] = None
    basis: Optional[str] = None
    out: Optional[str] = None
    trace: Optional[str] = None
    plot: Optional[str] = None


def add_arguments(p):
    path_arg(p, "--target", "weights document to transport toward")
    path_arg(p, "--data", "scalar samples; the target is fitted from them (needs --basis)")
    path_arg(p, "--init", "initial weights document (default: uniform)")
    path_arg(p, "--basis", "basis document (default: the one embedded in the weights)")
    path_arg(p, "--out", "learned weights document (default <run dir>/weights.json)")
    path_arg(p, "--trace", "trace CSV iter,w1,ngmg_norm (default <run dir>/trace.csv)")
    path_arg(p, "--plot", "SVG of the W1 and NGMG traces")
    config_arg(p, "--eps", "transport.tolerance", "stop when the deficit norm is <= eps", type=float)
    config_arg(p, "--eta", "transport.step_size", "step size", type=float)
    config_arg(p, "--max-iters", "transport.max_iters", "iteration cap", type=int)
    config_arg(p, "--update", "transport.update", "update rule", choices=["routed", "additive"])
    config_arg(p, "--kernel-scale", "ngmg.kernel_scale", "kernel sigma (default: 2x spacing)", type=float)


def run(r: Run) -> None:
    body = parse_inputs(TransportInput, r)
    if bool(body.target) == bool(body.data):
        raise ConfigError("transport: give exactly one of --target or --data")
    cfg = r.config.transport
    config = TransportConfig(step_size=cfg.step_size, tolerance=cfg.tolerance, max_iters=cfg.max_iters,
                             kernel_scale=r.config.ngmg.kernel_scale, update=cfg.update)

    init, init_basis = load_weights(body.init) if body.init else (None, None)
    if body.target:
        target, target_basis = load_weights(body.target)
        basis = resolve_basis(body.basis, target_basis, init_basis)
        result = transport(basis, target, init if init is not None else initial_weights(basis), config)
    else:
        basis = resolve_basis(body.basis, init_basis)
        result = learn_density(basis, read_samples(body.data), init, config)

    print(f"status\t{result.status.value}")
    print(f"iterations\t{result.iterations}")
    print(f"w1\t{result.trace.records[-1].w1:.12g}")
    r.wrote(save_doc(WeightsDoc.from_weights(result.weights, basis), r.path("out", "weights.json")))
    r.wrote(write_rows(result.trace.rows(), r.path("trace", "trace.csv"), columns=TRACE_COLUMNS))
    if body.plot:
        r.wrote(emit_plot(
            {"W1": (result.trace.iterations, result.trace.w1),
             "NGMG norm": (result.trace.iterations, [row["ngmg_norm"] for row in result.trace.rows()])},
            body.plot, title=f"transport ({cfg.update})", xlabel="iteration", ylabel="value",
        ))


command = Command(name="transport", help="learn weights by NGMG transport toward a target",
                  add_arguments=add_arguments, run=run)
