"""Synthetic driving scenarios, the scripted expert, and dataset files."""
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from vla_world_lab.core.config import DT_S, HORIZON
from vla_world_lab.core.errors import DataIOError, DatasetFormatError, GenerationError
from vla_world_lab.schemas.dataset import (
    DATASET_FORMAT,
    DATASET_VERSION,
    BoundaryLayout,
    DatasetRecord,
    ScenarioConfig,
    Split,
)
from vla_world_lab.schemas.sample import StructuredSample
from vla_world_lab.schemas.scene import (
    ORIGIN,
    ActionLabel,
    AgentKind,
    AgentState,
    EgoState,
    Lateral,
    Longitudinal,
    MissionGoal,
    Scene,
    Segment,
    ShortPrediction,
    Trajectory,
    Vec2,
    validate_scene,
)
from vla_world_lab.schemas.world import GridSpec, OccupancyGrid
from vla_world_lab.utils.geometry import polyline_length
from vla_world_lab.utils.kinematics import constant_acceleration_track, heading_label
from vla_world_lab.utils.narration import perception_text, think_text
from vla_world_lab.utils.trajectory_vocab import CURVATURE_OF, DEFAULT_VOCAB, TrajectoryVocabulary
from vla_world_lab.utils.world_engine import (
    check_collision,
    corridor_conflicts,
    default_corridor_halfwidth,
    imagine,
    rollout_world,
    stopping_allowance,
    to_imagined_frame,
    tokenize,
    trajectory_poses,
)

logger = logging.getLogger(__name__)

PEDESTRIAN_FOOTPRINT = (0.6, 0.6)
PEDESTRIAN_SPEED_MAX = 1.5
# Agent spawn window in the ego frame.
SPAWN_X = 14.0
SPAWN_Y = (-6.0, 15.0)
# Final speed change that turns KEEP into ACCELERATE or DECELERATE.
SPEED_CHANGE_MPS = 1.0


@dataclass(frozen=True)
class ExpertPlan:
    tokens: Tuple[int, ...]
    trajectory: Trajectory
    action: ActionLabel


def accel_profiles(start: int, levels: int, horizon: int) -> List[Tuple[int, ...]]:
    """Acceleration-level sequences that jump to a first level, then move one
    level per step toward a target level. Ordered by how far the first level,
    then the target, lies from `start`, so holding `start` comes first.
    """
    by_distance = sorted(range(levels), key=lambda i: (abs(i - start), i))
    seen, profiles = set(), []
    for first in by_distance:
        for target in by_distance:
            level, sequence = first, []
            for _ in range(horizon):
                sequence.append(level)
                level += (target > level) - (target < level)
            if tuple(sequence) not in seen:
                seen.add(tuple(sequence))
                profiles.append(tuple(sequence))
    return profiles


def longitudinal_label(v0: float, speeds: Sequence[float]) -> Longitudinal:
    final = speeds[-1]
    if final <= 1e-9:
        return Longitudinal.STOP
    if final - v0 >= SPEED_CHANGE_MPS:
        return Longitudinal.ACCELERATE
    if final - v0 <= -SPEED_CHANGE_MPS:
        return Longitudinal.DECELERATE
    return Longitudinal.KEEP


def expert_plan(
    scene: Scene,
    goal: MissionGoal,
    vocab: TrajectoryVocabulary = DEFAULT_VOCAB,
    horizon: int = HORIZON,
    grid: GridSpec = GridSpec(),
    stop_margin: float = 1.0,
) -> Optional[ExpertPlan]:
    """First acceptable vocabulary plan: the goal's turn before going straight,
    and within each the profile closest to holding the ego's acceleration.

    A plan is acceptable when it never collides in the world rollout and
    ends `stop_margin` short of the first obstacle in its corridor, as seen
    in the frame imagined under its own first waypoint.
    """
    ego = scene.ego
    heading = np.array([math.cos(ego.heading), math.sin(ego.heading)])
    start = vocab.accel_index(float(np.dot(ego.acceleration.as_array(), heading)))
    worlds = rollout_world(scene, horizon, vocab.step_s)
    halfwidth = default_corridor_halfwidth()
    frames: Dict[Tuple[float, float], OccupancyGrid] = {}
    laterals = [goal] if goal == Lateral.FORWARD else [goal, Lateral.FORWARD]
    for lateral in laterals:
        for levels in accel_profiles(start, len(vocab.accels), horizon):
            tokens = tuple(vocab.token(level, CURVATURE_OF[lateral]) for level in levels)
            trajectory = vocab.decode(tokens, ego)
            poses = trajectory_poses(trajectory, ego)
            if any(check_collision(world, pose) for world, pose in zip(worlds, poses)):
                continue
            first = trajectory.points[0]
            key = (first.x, first.y)
            if key not in frames:
                frames[key] = imagine(scene, first, vocab.step_s, grid)
            allowed = stopping_allowance(frames[key], scene, first, trajectory, halfwidth, stop_margin)
            length = polyline_length(np.vstack([ego.position.as_array(), trajectory.as_array()]))
            if allowed is not None and length > allowed + 1e-9:
                continue
            action = ActionLabel(
                lateral=lateral, longitudinal=longitudinal_label(ego.velocity.norm(), vocab.speeds(tokens, ego))
            )
            return ExpertPlan(tokens, trajectory, action)
    return None


def _choice(rng: np.random.Generator, mix: Dict) -> object:
    keys = list(mix)
    return keys[int(rng.choice(len(keys), p=[mix[k] for k in keys]))]


def _sample_agent(rng: np.random.Generator, agent_id: str, cfg: ScenarioConfig, x_limit: float) -> AgentState:
    if rng.random() < cfg.pedestrian_fraction:
        heading = float(rng.uniform(-math.pi, math.pi))
        speed = float(rng.uniform(0.0, PEDESTRIAN_SPEED_MAX))
        kind, footprint, yaw_rate = AgentKind.PEDESTRIAN, PEDESTRIAN_FOOTPRINT, 0.0
    else:
        heading = float(rng.choice([math.pi / 2, -math.pi / 2, 0.0, -math.pi]))
        speed = float(rng.uniform(0.0, cfg.agent_speed_max))
        kind = AgentKind.VEHICLE
        footprint = (float(rng.uniform(4.0, 4.8)), float(rng.uniform(1.8, 2.0)))
        yaw_rate = float(rng.choice([0.0, 0.0, 0.2, -0.2]))
    position = Vec2(x=float(rng.uniform(-x_limit, x_limit)), y=float(rng.uniform(*SPAWN_Y)))
    return AgentState(
        id=agent_id,
        kind=kind,
        position=position,
        velocity=Vec2(x=speed * math.cos(heading), y=speed * math.sin(heading)),
        yaw_rate=yaw_rate,
        footprint=footprint,
        heading=heading,
    )


def _lead_agent(rng: np.random.Generator, agent_id: str) -> AgentState:
    speed = float(rng.uniform(0.0, 2.0))
    return AgentState(
        id=agent_id,
        kind=AgentKind.VEHICLE,
        position=Vec2(x=float(rng.uniform(-0.8, 0.8)), y=float(rng.uniform(7.0, 14.0))),
        velocity=Vec2(x=0.0, y=speed),
        footprint=(4.5, 1.9),
        heading=math.pi / 2,
    )


def sample_scene(rng: np.random.Generator, cfg: ScenarioConfig) -> Scene:
    speed = float(rng.choice(cfg.ego_speeds))
    accel = float(rng.choice(cfg.ego_accels)) if speed > 0 else 0.0
    velocity, acceleration = Vec2(x=0.0, y=speed), Vec2(x=0.0, y=accel)
    history = constant_acceleration_track(ORIGIN, velocity, acceleration, 3, DT_S)
    ego = EgoState(position=ORIGIN, velocity=velocity, acceleration=acceleration, heading=math.pi / 2)

    boundaries: List[Segment] = []
    x_limit = SPAWN_X
    if _choice(rng, cfg.layout_mix) == BoundaryLayout.ROAD:
        half = float(rng.uniform(*cfg.road_halfwidth_m))
        boundaries = [
            Segment(start=Vec2(x=-half, y=-16.0), end=Vec2(x=-half, y=16.0)),
            Segment(start=Vec2(x=half, y=-16.0), end=Vec2(x=half, y=16.0)),
        ]
        x_limit = half - 1.5

    count = int(rng.integers(cfg.agents_min, cfg.agents_max + 1))
    agents: List[AgentState] = []
    if count and rng.random() < cfg.lead_agent_prob:
        agents.append(_lead_agent(rng, "a0"))
    while len(agents) < count:
        agents.append(_sample_agent(rng, f"a{len(agents)}", cfg, x_limit))
    return Scene(timestamp=0.0, ego=ego, agents=agents, boundaries=boundaries, ego_history=history)


def build_record(scene: Scene, goal: MissionGoal, plan: ExpertPlan, grid: GridSpec, split: Split) -> DatasetRecord:
    first = plan.trajectory.points[0]
    displacement = Vec2.of(first.as_array() - scene.ego.position.as_array())
    gt_short = ShortPrediction(waypoint=first, direction=heading_label(displacement))
    return DatasetRecord(
        scene=scene,
        goal=goal,
        gt_short=gt_short,
        gt_future_grid=imagine(scene, first, DT_S, grid),
        gt_action=plan.action,
        gt_trajectory=plan.trajectory,
        split=split,
    )


def generate_scenarios(cfg: ScenarioConfig = ScenarioConfig(), grid: GridSpec = GridSpec()) -> List[DatasetRecord]:
    """Seeded scenes with expert ground truth; scene i draws from its own
    stream so records do not depend on earlier rejections.
    """
    records: List[DatasetRecord] = []
    rejected = 0
    for index in range(cfg.n_scenes):
        split = Split.TRAIN if index < cfg.n_train else Split.VAL
        reasons: List[str] = []
        for attempt in range(cfg.max_attempts):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index, attempt]))
            scene = sample_scene(rng, cfg)
            goal = _choice(rng, cfg.goal_mix)
            problems = validate_scene(scene)
            if problems:
                reasons.append(problems[0])
                continue
            if check_collision(scene, (scene.ego.position, scene.ego.heading)):
                reasons.append("agent overlaps the ego at t=0")
                continue
            plan = expert_plan(scene, goal, grid=grid, stop_margin=cfg.stop_margin_m)
            if plan is None:
                reasons.append("no collision-free expert plan")
                continue
            records.append(build_record(scene, goal, plan, grid, split))
            break
        else:
            raise GenerationError(index, cfg.max_attempts, reasons)
        rejected += len(reasons)
    logger.debug("Generated %d scenes, %d rejected attempts", len(records), rejected)
    return records


def make_gt_sample(record: DatasetRecord, halfwidth: Optional[float] = None) -> StructuredSample:
    """Ground-truth six-segment sample for a record."""
    scene = record.scene
    halfwidth = halfwidth or default_corridor_halfwidth()
    framed = to_imagined_frame(scene, record.gt_short.waypoint, record.gt_trajectory.as_array())
    start = to_imagined_frame(scene, record.gt_short.waypoint, scene.ego.position.as_array()[None, :])[0]
    conflicts = corridor_conflicts(
        record.gt_future_grid, Trajectory.from_array(framed, record.gt_trajectory.step_s), halfwidth, Vec2.of(start)
    )
    return StructuredSample(
        perception=perception_text(scene),
        prediction=record.gt_short,
        visual=tokenize(record.gt_future_grid),
        think=think_text(conflicts, record.gt_trajectory.step_s, halfwidth),
        action=record.gt_action,
        answer=record.gt_trajectory,
    )


def split_records(records: Sequence[DatasetRecord], split: Split) -> List[DatasetRecord]:
    return [r for r in records if r.split == split]


def dataset_stats(records: Sequence[DatasetRecord]) -> Dict[str, object]:
    return {
        "records": len(records),
        "splits": dict(sorted(Counter(r.split.value for r in records).items())),
        "goals": dict(sorted(Counter(r.goal.value for r in records).items())),
        "lateral": dict(sorted(Counter(r.gt_action.lateral.value for r in records).items())),
        "longitudinal": dict(sorted(Counter(r.gt_action.longitudinal.value for r in records).items())),
        "agents_mean": float(np.mean([len(r.scene.agents) for r in records])) if records else 0.0,
        "road_layouts": sum(1 for r in records if r.scene.boundaries),
    }


# ------------------------------
# Persistence
# ------------------------------


def save_dataset(records: Sequence[DatasetRecord], path: Union[str, Path]) -> None:
    """JSONL: a header object, then one record per line."""
    path = Path(path)
    header = {"format": DATASET_FORMAT, "version": DATASET_VERSION, "count": len(records)}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            handle.write(json.dumps(header, sort_keys=True) + "\n")
            for record in records:
                handle.write(record.model_dump_json() + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write dataset {path}: {exc}") from exc


def load_dataset(path: Union[str, Path]) -> List[DatasetRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataIOError(f"cannot read dataset {path}: {exc}") from exc
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(str(path), 1, "missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(str(path), 1, f"bad header: {exc.msg}") from exc
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise DatasetFormatError(str(path), 1, "not a dataset file")
    if header.get("version") != DATASET_VERSION:
        raise DatasetFormatError(str(path), 1, f"unsupported version {header.get('version')!r}")

    records: List[DatasetRecord] = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            records.append(DatasetRecord.model_validate_json(line))
        except ValidationError as exc:
            first = exc.errors()[0]
            where = ".".join(str(p) for p in first.get("loc", ()))
            raise DatasetFormatError(str(path), lineno, f"{where}: {first['msg']}" if where else first["msg"]) from exc
    expected = header.get("count")
    if expected is not None and expected != len(records):
        raise DatasetFormatError(str(path), len(lines) + 1, f"expected {expected} records, found {len(records)}")
    return records
