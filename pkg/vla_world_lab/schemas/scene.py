import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from vla_world_lab.core.config import DT_S


class Lateral(str, Enum):
    FORWARD = "forward"
    LEFT = "left"
    RIGHT = "right"


class Longitudinal(str, Enum):
    KEEP = "keep"
    ACCELERATE = "accelerate"
    DECELERATE = "decelerate"
    STOP = "stop"


# A mission goal is one lateral routing command.
MissionGoal = Lateral


class AgentKind(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


class Vec2(_Frozen):
    """Ego-centric BEV point or vector in meters: +x right, +y forward."""

    x: float
    y: float

    @field_validator("x", "y")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("component must be finite")
        return v

    @classmethod
    def of(cls, arr) -> "Vec2":
        return cls(x=float(arr[0]), y=float(arr[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


ORIGIN = Vec2(x=0.0, y=0.0)


class EgoState(_Frozen):
    position: Vec2 = ORIGIN
    velocity: Vec2 = ORIGIN
    acceleration: Vec2 = ORIGIN
    heading: float = math.pi / 2

    @field_validator("heading")
    @classmethod
    def _heading_range(cls, v: float) -> float:
        if not (math.isfinite(v) and -math.pi <= v < math.pi):
            raise ValueError("heading must lie in [-pi, pi)")
        return v


class AgentState(_Frozen):
    id: str
    kind: AgentKind = AgentKind.VEHICLE
    position: Vec2
    velocity: Vec2 = ORIGIN
    yaw_rate: float = 0.0
    footprint: Tuple[float, float] = (4.0, 2.0)
    heading: Optional[float] = None

    @property
    def yaw(self) -> float:
        """Box orientation: explicit heading, else velocity bearing, else forward."""
        if self.heading is not None:
            return self.heading
        if self.velocity.norm() > 1e-9:
            return math.atan2(self.velocity.y, self.velocity.x)
        return math.pi / 2


class Segment(_Frozen):
    start: Vec2
    end: Vec2


class Scene(_Frozen):
    timestamp: float = 0.0
    ego: EgoState = EgoState()
    agents: List[AgentState] = Field(default_factory=list)
    boundaries: List[Segment] = Field(default_factory=list)
    # Oldest to newest, DT_S apart; the newest entry is the current position.
    ego_history: List[Vec2] = Field(default_factory=list)


class Trajectory(_Frozen):
    step_s: float = Field(DT_S, gt=0)
    points: List[Vec2] = Field(min_length=1)

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.points], dtype=float)

    @classmethod
    def from_array(cls, arr, step_s: float = DT_S) -> "Trajectory":
        return cls(step_s=step_s, points=[Vec2.of(p) for p in np.asarray(arr, dtype=float)])

    def __len__(self) -> int:
        return len(self.points)


class ActionLabel(_Frozen):
    lateral: Lateral
    longitudinal: Longitudinal


class ShortPrediction(_Frozen):
    """Next-waypoint estimate (t + 0.5 s) with its driving direction."""

    waypoint: Vec2
    direction: Lateral


def validate_scene(scene: Scene) -> List[str]:
    """Every violated scene invariant, one message each; empty means valid."""
    report: List[str] = []
    if len(scene.ego_history) < 3:
        report.append(f"history too short: {len(scene.ego_history)} < 3")
    if not math.isfinite(scene.timestamp):
        report.append("non-finite timestamp")
    for agent in scene.agents:
        length, width = agent.footprint
        if not (length > 0 and width > 0):
            report.append(f"non-positive footprint: agent {agent.id} ({length}, {width})")
        if not math.isfinite(agent.yaw_rate):
            report.append(f"non-finite yaw rate: agent {agent.id}")
        if agent.heading is not None and not (-math.pi <= agent.heading < math.pi):
            report.append(f"heading out of range: agent {agent.id}")
    ids = [a.id for a in scene.agents]
    if len(set(ids)) != len(ids):
        report.append("duplicate agent id")
    for i, seg in enumerate(scene.boundaries):
        if seg.start == seg.end:
            report.append(f"degenerate boundary segment {i}")
    return report
