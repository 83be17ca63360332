import argparse
import logging
import sys

from mixgrad.cli.commands.diffusion import sample_command, train_command as train_diffusion_command
from mixgrad.cli.commands.experiments import EXPERIMENTS
from mixgrad.cli.commands.fit import command as fit_command
from mixgrad.cli.commands.ngmg import command as ngmg_command
from mixgrad.cli.commands.train_mlp import command as train_mlp_command
from mixgrad.cli.commands.transport import command as transport_command
from mixgrad.cli.commands.w1 import command as w1_command
from mixgrad.cli.config import build_config
from mixgrad.cli.runs import Command, Run, open_run
from mixgrad.errors import MixgradError
from mixgrad.settings import settings

log = logging.getLogger("mixgrad.cli")

COMMANDS: list[Command] = [
    fit_command,
    w1_command,
    ngmg_command,
    transport_command,
    train_mlp_command,
    train_diffusion_command,
    sample_command,
]


def _global_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--seed", dest="seed", type=int, default=argparse.SUPPRESS, help="master seed")
    p.add_argument("--run-dir", help="run directory (default <runs>/<command>-<config hash>)")
    p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default=None,
                   help="log level (default MIXGRAD_LOG_LEVEL)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixgrad", description="GMM expansion, NGMG and latent diffusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for cmd in COMMANDS:
        p = sub.add_parser(cmd.name, help=cmd.help)
        _global_arguments(p)
        cmd.add_arguments(p)
        p.set_defaults(handler=cmd)

    exp = sub.add_parser("exp", help="comparative experiments")
    exp_sub = exp.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for cmd in EXPERIMENTS:
        p = exp_sub.add_parser(cmd.name, help=cmd.help)
        _global_arguments(p)
        cmd.add_arguments(p)
        p.set_defaults(handler=cmd)
    return parser


def configure_logging(level: str | None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    logging.captureWarnings(True)


def _overrides(ns: argparse.Namespace) -> dict:
    skip = {"command", "experiment", "handler", "config", "run_dir", "log_level"}
    return {k: v for k, v in vars(ns).items() if k not in skip}


def dispatch(argv: list[str] | None = None) -> int:
    """Parse, run one command, and return its exit code."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        # argparse: 2 on usage errors, 0 for --help
        return e.code if isinstance(e.code, int) else 0
    configure_logging(ns.log_level)

    cmd: Command = ns.handler
    name = f"exp-{ns.experiment}" if ns.command == "exp" else ns.command
    run: Run | None = None
    try:
        config = build_config(name, ns.config, _overrides(ns))
        run = open_run(config, ns.run_dir)
        cmd.run(run)
    except MixgradError as e:
        print(f"error: {e.detail}", file=sys.stderr)
        if run is not None:
            run.finish(e.exit_code, e.detail)
        return e.exit_code
    except Exception as e:
        log.exception("unexpected failure in %s", name)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        if run is not None:
            run.finish(1, str(e))
        return 1
    run.finish(0)
    log.info("%s done, outputs in %s", name, run.directory)
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
