# mixgrad/cli/runs.py
import argparse
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from mixgrad.cli.config import RunConfig
from mixgrad.errors import ConfigError, DocumentError
from mixgrad.settings import settings

log = logging.getLogger(__name__)


class PathInput(BaseModel):
    """Base for each command's file arguments. Paths meant for other commands are ignored."""
    model_config = ConfigDict(extra="ignore")


Input = TypeVar("Input", bound=PathInput)


class StatusDoc(BaseModel):
    command: str
    config_hash: str
    status: str
    exit_code: int
    outputs: list[str]
    detail: Optional[str] = None
    finished_at: str


@dataclass
class Run:
    """One command invocation: its config, its directory and what it wrote."""
    config: RunConfig
    directory: Path
    outputs: list[Path] = field(default_factory=list)

    def path(self, key: str, default_name: str) -> Path:
        """An explicit --<key> path if given, else <run dir>/<default_name>."""
        given = self.config.paths.get(key)
        return Path(given) if given else self.directory / default_name

    def wrote(self, path) -> Path:
        p = Path(path)
        self.outputs.append(p)
        log.info("wrote %s", p)
        return p

    def finish(self, exit_code: int, detail: str | None = None) -> None:
        doc = StatusDoc(
            command=self.config.command,
            config_hash=self.config.config_hash(),
            status="ok" if exit_code == 0 else "error",
            exit_code=exit_code,
            outputs=[str(p) for p in self.outputs],
            detail=detail,
            finished_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        try:
            (self.directory / "status.json").write_text(doc.model_dump_json(indent=2) + "\n")
        except OSError as e:
            log.error("cannot write status file: %s", e)


def open_run(config: RunConfig, run_dir: str | None = None) -> Run:
    """Create the run directory (<runs>/<command>-<hash12> by default) and echo the config."""
    directory = Path(run_dir) if run_dir else Path(settings.runs_dir) / f"{config.command}-{config.config_hash()[:12]}"
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "config.json").write_text(json.dumps(config.echo(), indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise DocumentError(f"cannot prepare run directory {directory}: {e.strerror or e}")
    return Run(config=config, directory=directory)


# ---------- command wiring ----------
@dataclass(frozen=True)
class Command:
    name: str
    help: str
    add_arguments: Callable[[argparse.ArgumentParser], None]
    run: Callable[[Run], None]


def path_arg(p: argparse.ArgumentParser, flag: str, help: str) -> None:
    key = flag.lstrip("-").replace("-", "_")
    p.add_argument(flag, dest=f"paths.{key}", default=argparse.SUPPRESS, metavar="PATH", help=help)


def config_arg(p: argparse.ArgumentParser, flag: str, dest: str, help: str, **kwargs) -> None:
    """A flag that overrides one RunConfig field ("section.field")."""
    p.add_argument(flag, dest=dest, default=argparse.SUPPRESS, help=help, **kwargs)


def parse_inputs(model: type[Input], run: Run) -> Input:
    try:
        return model.model_validate(run.config.paths)
    except ValidationError as e:
        first = e.errors()[0]
        name = "--" + ".".join(str(p) for p in first["loc"]).replace("_", "-")
        raise ConfigError(f"{run.config.command}: {name}: {first['msg']}")
