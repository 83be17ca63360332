# mixgrad/settings.py
import os
from dataclasses import dataclass

from dotenv import load_dotenv

from mixgrad.errors import ConfigError

load_dotenv()


def _env_int(name: str, default: int, minimum: int | None = None) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}")
    if not value > 0:
        raise ConfigError(f"{name} must be > 0, got {value}")
    return value


@dataclass(frozen=True)
class Settings:
    quad_points: int
    support_pad: float
    seed: int
    runs_dir: str
    log_level: str
    workers: int


def load_settings() -> Settings:
    """Read MIXGRAD_* variables (a .env file is honoured) into Settings."""
    level = os.environ.get("MIXGRAD_LOG_LEVEL", "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ConfigError(f"MIXGRAD_LOG_LEVEL not a logging level: {level!r}")
    return Settings(
        quad_points=_env_int("MIXGRAD_QUAD_POINTS", 2048, minimum=16),
        support_pad=_env_float("MIXGRAD_SUPPORT_PAD", 4.0),
        seed=_env_int("MIXGRAD_SEED", 0),
        runs_dir=os.environ.get("MIXGRAD_RUNS_DIR", "runs"),
        log_level=level,
        workers=_env_int("MIXGRAD_WORKERS", 1, minimum=1),
    )


settings = load_settings()
