from enum import Enum
from typing import Dict, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from vla_world_lab.schemas.scene import ActionLabel, MissionGoal, Scene, ShortPrediction, Trajectory
from vla_world_lab.schemas.world import OccupancyGrid

DATASET_FORMAT = "vla-world-dataset"
DATASET_VERSION = 1


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"


class BoundaryLayout(str, Enum):
    OPEN = "open"
    ROAD = "road"


class ScenarioConfig(BaseModel):
    n_scenes: int = Field(250, gt=0)
    val_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    agents_min: int = Field(1, ge=0)
    agents_max: int = Field(4, ge=0)
    ego_speeds: Tuple[float, ...] = (2.0, 4.0, 6.0)
    ego_accels: Tuple[float, ...] = (-1.0, 0.0, 1.0)
    # Expert plans stop this far short of corridor obstacles; keep it above policy.refine_margin_m.
    stop_margin_m: float = Field(1.0, ge=0.0)
    agent_speed_max: float = Field(6.0, ge=0.0)
    pedestrian_fraction: float = Field(0.25, ge=0.0, le=1.0)
    lead_agent_prob: float = Field(0.35, ge=0.0, le=1.0)
    goal_mix: Dict[MissionGoal, float] = Field(
        default_factory=lambda: {MissionGoal.FORWARD: 0.5, MissionGoal.LEFT: 0.25, MissionGoal.RIGHT: 0.25}
    )
    layout_mix: Dict[BoundaryLayout, float] = Field(
        default_factory=lambda: {BoundaryLayout.OPEN: 0.5, BoundaryLayout.ROAD: 0.5}
    )
    road_halfwidth_m: Tuple[float, float] = (9.0, 12.0)
    max_attempts: int = Field(50, gt=0)
    seed: int = 0

    @field_validator("goal_mix", "layout_mix")
    @classmethod
    def _proportions(cls, v: Dict) -> Dict:
        if any(p < 0 for p in v.values()) or abs(sum(v.values()) - 1.0) > 1e-9:
            raise ValueError("proportions must be non-negative and sum to 1")
        return v

    @field_validator("ego_speeds")
    @classmethod
    def _speeds(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v or min(v) < 0:
            raise ValueError("ego speeds must be a non-empty list of non-negative values")
        return v

    @model_validator(mode="after")
    def _agent_range(self) -> "ScenarioConfig":
        if self.agents_min > self.agents_max:
            raise ValueError("agents_min exceeds agents_max")
        if self.road_halfwidth_m[0] > self.road_halfwidth_m[1]:
            raise ValueError("road_halfwidth_m must be (low, high)")
        return self

    @property
    def n_train(self) -> int:
        return self.n_scenes - int(round(self.n_scenes * self.val_fraction))


class DatasetRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    scene: Scene
    goal: MissionGoal
    gt_short: ShortPrediction
    gt_future_grid: OccupancyGrid
    gt_action: ActionLabel
    gt_trajectory: Trajectory
    split: Split = Split.TRAIN
