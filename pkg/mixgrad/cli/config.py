# mixgrad/cli/config.py
import hashlib
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from mixgrad.errors import ConfigError, DocumentError
from mixgrad.seeding import SEED_OFFSETS
from mixgrad.settings import settings


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BasisSection(_Section):
    n_components: int = Field(64, ge=2)
    sigma: Optional[float] = Field(None, gt=0)
    support_pad: float = Field(default_factory=lambda: settings.support_pad, gt=0)
    quad_points: int = Field(default_factory=lambda: settings.quad_points, ge=16)


class W1Section(_Section):
    n_samples: int = Field(100_000, ge=2)


class NgmgSection(_Section):
    kernel_scale: Optional[float] = Field(None, gt=0)
    check_prop2: bool = False


class TransportSection(_Section):
    step_size: float = Field(1.0, gt=0)
    tolerance: float = Field(1e-3, gt=0)
    max_iters: int = Field(2000, ge=1)
    update: Literal["routed", "additive"] = "routed"


class TrainSection(_Section):
    learning_rate: float = Field(0.5, gt=0)
    batch_size: int = Field(32, ge=1)
    iterations: int = Field(1500, ge=0)
    loss_name: Literal["bce", "ngmg_literal", "ngmg_two_sided", "mse"] = "bce"
    hidden: list[int] = Field(default_factory=lambda: [64, 64])
    hidden_activation: Literal["relu", "tanh"] = "relu"
    kernel_scale: float = Field(1.0, gt=0)
    floor: float = Field(1.0, ge=0)
    n_samples: int = Field(1000, ge=1)
    n_features: int = Field(4, ge=2)


class DiffusionSection(_Section):
    t_max: int = Field(100, ge=1)
    beta_start: float = Field(0.001, gt=0, lt=1)
    beta_end: float = Field(0.2, gt=0, lt=1)
    code_len: int = Field(8, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [128, 32, 128])
    iterations: int = Field(20000, ge=0)
    batch_size: int = Field(128, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    optimizer: Literal["sgd", "adam"] = "adam"
    lr_schedule: Literal["constant", "cosine"] = "cosine"
    labeling: Literal["features", "classes"] = "features"
    with_head: bool = False
    lambda_cls: float = Field(0.1, ge=0)
    cls_loss: Literal["bce", "ngmg_literal", "ngmg_two_sided"] = "bce"
    resample_latents_per_epoch: bool = False
    n_train: int = Field(2000, ge=1)
    noise: float = Field(0.08, gt=0)
    n_samples: int = Field(1000, ge=1)


class ExperimentSection(_Section):
    n_seeds: int = Field(5, ge=1)
    n_trials: int = Field(20, ge=1)
    n_held_out: int = Field(500, ge=1)
    n_reference: int = Field(20000, ge=1)
    n_generated: int = Field(1000, ge=1)
    quantile: float = Field(0.95, gt=0, le=1)
    class_labeling: Literal["classes", "features"] = "classes"
    test_fraction: float = Field(0.2, gt=0, lt=1)
    test_batch_size: int = Field(64, ge=1)
    workers: int = Field(default_factory=lambda: settings.workers, ge=1)


class RunConfig(_Section):
    command: str = ""
    seed: int = Field(default_factory=lambda: settings.seed)
    paths: dict[str, str] = Field(default_factory=dict)
    basis: BasisSection = Field(default_factory=BasisSection)
    w1: W1Section = Field(default_factory=W1Section)
    ngmg: NgmgSection = Field(default_factory=NgmgSection)
    transport: TransportSection = Field(default_factory=TransportSection)
    train: TrainSection = Field(default_factory=TrainSection)
    diffusion: DiffusionSection = Field(default_factory=DiffusionSection)
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)

    def canonical_json(self) -> str:
        return self.model_dump_json()

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def echo(self) -> dict:
        """Effective config plus the seed substream table."""
        return {
            "config": self.model_dump(),
            "config_hash": self.config_hash(),
            "seed_streams": {name: self.seed + offset for name, offset in SEED_OFFSETS.items()},
        }


# ---------- helpers ----------
def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _nest(flat: dict[str, Any]) -> dict:
    # "train.learning_rate" -> {"train": {"learning_rate": ...}}
    out: dict = {}
    for key, value in flat.items():
        node = out
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return out


def _describe(e: ValidationError) -> str:
    first = e.errors()[0]
    where = ".".join(str(p) for p in first["loc"]) or "config"
    return f"{where}: {first['msg']}"


def build_config(command: str, config_file: Optional[str], overrides: dict[str, Any]) -> RunConfig:
    """defaults (environment included) < JSON config file < command flags."""
    layered = RunConfig().model_dump()
    if config_file:
        path = Path(config_file)
        try:
            from_file = RunConfig.model_validate_json(path.read_text()).model_dump(exclude_unset=True)
        except OSError as e:
            raise DocumentError(f"cannot read config {path}: {e.strerror or e}")
        except ValidationError as e:
            raise ConfigError(f"{path}: {_describe(e)}")
        layered = _merge(layered, from_file)
    layered = _merge(layered, _nest(overrides))
    layered["command"] = command
    try:
        return RunConfig.model_validate(layered)
    except ValidationError as e:
        raise ConfigError(_describe(e))
