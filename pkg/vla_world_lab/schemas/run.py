"""YAML run configuration validated into one pydantic tree."""
from pathlib import Path
from typing import Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from vla_world_lab.core.errors import ConfigError, DataIOError
from vla_world_lab.schemas.dataset import ScenarioConfig, Split
from vla_world_lab.schemas.training import GrpoConfig, PolicyConfig, RewardConfig, StageConfig
from vla_world_lab.schemas.world import GridSpec
from vla_world_lab.utils.kinematics import FusionConfig

STAGES = ("pretrain", "sft", "rl")


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    data_dir: Path = Path("data")
    checkpoint_dir: Path = Path("checkpoints")
    log_dir: Path = Path("logs")
    report_dir: Path = Path("reports")

    def dataset(self, split: Split) -> Path:
        return self.data_dir / f"{split.value}.jsonl"

    def stats(self) -> Path:
        return self.data_dir / "stats.json"

    def checkpoint(self, stage: str) -> Path:
        return self.checkpoint_dir / f"{stage}.ckpt"

    def log(self, stage: str) -> Path:
        return self.log_dir / f"{stage}.csv"


class MetricsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    feature_dim: int = Field(64, ge=1)
    projection_seed: int = 0
    eval_split: Split = Split.VAL


class RunConfig(BaseModel):
    """Everything a command needs. `seed` drives scenario generation,
    parameter initialization and GRPO sampling.
    """

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    paths: PathsConfig = PathsConfig()
    stages: StageConfig = StageConfig()
    grpo: GrpoConfig = GrpoConfig()
    rewards: RewardConfig = RewardConfig()
    kinematics: FusionConfig = FusionConfig()
    grid: GridSpec = GridSpec()
    scenario: ScenarioConfig = ScenarioConfig()
    policy: PolicyConfig = PolicyConfig()
    metrics: MetricsConfig = MetricsConfig()

    def seeded(self) -> "RunConfig":
        """Copy with the run seed pushed into the seeded sub-configs."""
        return self.model_copy(
            update={
                "scenario": self.scenario.model_copy(update={"seed": self.seed}),
                "grpo": self.grpo.model_copy(update={"seed": self.seed}),
            }
        )


def _field_path(exc: ValidationError) -> tuple:
    first = exc.errors()[0]
    return ".".join(str(p) for p in first.get("loc", ())), first["msg"]


def load_run_config(path: Optional[Union[str, Path]] = None, seed: Optional[int] = None) -> RunConfig:
    """Parse a YAML run config; `seed` overrides the file's seed."""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataIOError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for section in ("scenario", "grpo"):
        block = data.get(section)
        if isinstance(block, dict) and "seed" in block:
            raise ConfigError("follows the top-level seed; set `seed` instead", f"{section}.seed")
    if seed is not None:
        data["seed"] = seed
    try:
        return RunConfig.model_validate(data).seeded()
    except ValidationError as exc:
        field, message = _field_path(exc)
        raise ConfigError(message, field or None) from exc
