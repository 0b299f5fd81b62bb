"""Desk-scale world model.

Agents move under constant velocity or constant turn rate, the scene is
rasterized into a top-down class grid, and the grid is the visual frame
that gets tokenized with a fixed class codebook.
"""
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from vla_world_lab.core.config import DT_S
from vla_world_lab.core.errors import TokenSequenceError
from vla_world_lab.schemas.scene import AgentKind, AgentState, EgoState, Scene, Segment, Trajectory, Vec2
from vla_world_lab.schemas.world import CellClass, Codebook, GridSpec, OccupancyGrid, TokenSequence
from vla_world_lab.utils.geometry import (
    box_corners,
    convex_overlap,
    heading_from_displacement,
    normalize_angle,
    point_segment_distance,
    points_in_box,
    project_on_polyline,
    rotation,
)

# Compact-car footprint (length, width) in meters.
EGO_FOOTPRINT: Tuple[float, float] = (4.08, 1.73)
CORRIDOR_MARGIN_M = 0.2
DEFAULT_CODEBOOK = Codebook()

Pose = Tuple[Vec2, float]


def default_corridor_halfwidth(ego_size: Tuple[float, float] = EGO_FOOTPRINT) -> float:
    return ego_size[1] / 2 + CORRIDOR_MARGIN_M


def _advance_agent(agent: AgentState, dt: float) -> AgentState:
    p, v = agent.position.as_array(), agent.velocity.as_array()
    speed, omega = float(np.linalg.norm(v)), agent.yaw_rate
    heading = None if agent.heading is None else normalize_angle(agent.heading + omega * dt)
    if abs(omega) < 1e-12 or speed < 1e-12:
        return agent.model_copy(update={"position": Vec2.of(p + v * dt), "heading": heading})
    h0 = math.atan2(v[1], v[0])
    h1 = h0 + omega * dt
    # exact integration along the circular arc of radius speed / omega
    p1 = p + (speed / omega) * np.array([math.sin(h1) - math.sin(h0), math.cos(h0) - math.cos(h1)])
    v1 = speed * np.array([math.cos(h1), math.sin(h1)])
    return agent.model_copy(update={"position": Vec2.of(p1), "velocity": Vec2.of(v1), "heading": heading})


def step_world(scene: Scene, dt: float = DT_S) -> Scene:
    """Advance every agent by dt; the ego and the boundaries stay put."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return scene.model_copy(
        update={"timestamp": scene.timestamp + dt, "agents": [_advance_agent(a, dt) for a in scene.agents]}
    )


def rollout_world(scene: Scene, steps: int, dt: float = DT_S) -> List[Scene]:
    """World states at t + dt, ..., t + steps * dt."""
    states = []
    for _ in range(steps):
        scene = step_world(scene, dt)
        states.append(scene)
    return states


@lru_cache(maxsize=8)
def _centers(spec: GridSpec) -> np.ndarray:
    return spec.cell_centers()


def render_grid(scene: Scene, spec: GridSpec = GridSpec(), ego_size: Tuple[float, float] = EGO_FOOTPRINT) -> OccupancyGrid:
    """Rasterize by cell-center tests; later layers win (ego > vehicle > pedestrian > boundary)."""
    centers = _centers(spec)
    cells = np.full(spec.num_cells, CellClass.FREE, dtype=np.int64)
    for seg in scene.boundaries:
        near = point_segment_distance(centers, seg.start.as_array(), seg.end.as_array()) <= spec.cell_size / 2
        cells[near] = CellClass.BOUNDARY
    for kind, cls in ((AgentKind.PEDESTRIAN, CellClass.PEDESTRIAN), (AgentKind.VEHICLE, CellClass.VEHICLE)):
        for agent in scene.agents:
            if agent.kind != kind:
                continue
            length, width = agent.footprint
            cells[points_in_box(centers, agent.position.as_array(), length, width, agent.yaw)] = cls
    ego = scene.ego
    cells[points_in_box(centers, ego.position.as_array(), ego_size[0], ego_size[1], ego.heading)] = CellClass.EGO
    return OccupancyGrid.from_array(cells, spec)


def imagine_scene(scene: Scene, waypoint: Vec2, dt: float = DT_S) -> Scene:
    """The world dt later, seen from the ego after it moves to `waypoint`.

    The new frame maps the new ego pose onto the current one, so zero motion
    leaves coordinates unchanged.
    """
    advanced = step_world(scene, dt)
    ego = scene.ego
    origin, p_new = ego.position.as_array(), waypoint.as_array()
    delta = p_new - origin
    h_new = heading_from_displacement(delta, ego.heading)
    turn = normalize_angle(ego.heading - h_new)
    rot = rotation(turn)

    def to_frame(p: Vec2) -> Vec2:
        return Vec2.of(rot @ (p.as_array() - p_new) + origin)

    agents = [
        a.model_copy(
            update={
                "position": to_frame(a.position),
                "velocity": Vec2.of(rot @ a.velocity.as_array()),
                "heading": None if a.heading is None else normalize_angle(a.heading + turn),
            }
        )
        for a in advanced.agents
    ]
    boundaries = [Segment(start=to_frame(s.start), end=to_frame(s.end)) for s in scene.boundaries]
    history = [to_frame(p) for p in scene.ego_history][1:] + [ego.position]
    new_ego = EgoState(
        position=ego.position,
        velocity=Vec2.of(rot @ (delta / dt)),
        acceleration=Vec2.of(rot @ ego.acceleration.as_array()),
        heading=ego.heading,
    )
    return Scene(timestamp=advanced.timestamp, ego=new_ego, agents=agents, boundaries=boundaries, ego_history=history)


def imagine(
    scene: Scene,
    short_waypoint: Vec2,
    dt: float = DT_S,
    spec: GridSpec = GridSpec(),
    ego_size: Tuple[float, float] = EGO_FOOTPRINT,
) -> OccupancyGrid:
    return render_grid(imagine_scene(scene, short_waypoint, dt), spec, ego_size)


def to_imagined_frame(scene: Scene, waypoint: Vec2, points: np.ndarray) -> np.ndarray:
    """Map current-frame points into the frame used by `imagine`."""
    ego = scene.ego
    origin, p_new = ego.position.as_array(), waypoint.as_array()
    h_new = heading_from_displacement(p_new - origin, ego.heading)
    rot = rotation(normalize_angle(ego.heading - h_new))
    return (np.asarray(points, dtype=float) - p_new) @ rot.T + origin


def tokenize(grid: OccupancyGrid, codebook: Codebook = DEFAULT_CODEBOOK) -> TokenSequence:
    lookup = np.asarray(codebook.class_to_token)
    return TokenSequence(tokens=tuple(int(t) for t in lookup[grid.as_array()]))


def detokenize(tokens: TokenSequence, spec: GridSpec = GridSpec(), codebook: Codebook = DEFAULT_CODEBOOK) -> OccupancyGrid:
    if len(tokens) != spec.num_cells:
        raise TokenSequenceError(f"expected {spec.num_cells} tokens, got {len(tokens)}")
    ids = tokens.as_array()
    bad = np.flatnonzero((ids < 0) | (ids >= codebook.size))
    if bad.size:
        raise TokenSequenceError(f"invalid token id {int(ids[bad[0]])} at position {int(bad[0])}")
    return OccupancyGrid.from_array(np.asarray(codebook.token_to_class)[ids], spec)


def _obstacle_centers(grid: OccupancyGrid) -> np.ndarray:
    cells = grid.as_array()
    mask = (cells != CellClass.FREE) & (cells != CellClass.EGO)
    return _centers(grid.spec)[mask]


def _corridor(grid: OccupancyGrid, vertices: np.ndarray, halfwidth: float) -> Tuple[np.ndarray, np.ndarray]:
    """Obstacle cell centers inside the corridor and their arc-length progress."""
    obstacles = _obstacle_centers(grid)
    if len(obstacles) == 0:
        return obstacles, np.zeros(0)
    dist, progress, along = project_on_polyline(obstacles, vertices)
    inside = (dist <= halfwidth) & (along >= 0)
    return obstacles[inside], progress[inside]


def _path_vertices(traj: Trajectory, start: Optional[Vec2]) -> np.ndarray:
    head = (start or Vec2(x=0.0, y=0.0)).as_array()
    return np.vstack([head, traj.as_array()])


def corridor_conflicts(
    grid: OccupancyGrid, traj: Trajectory, corridor_halfwidth: float, start: Optional[Vec2] = None
) -> List[Tuple[int, float]]:
    """Per waypoint, the distance to the nearest obstacle cell inside the
    corridor swept along start -> waypoints; +inf when the corridor is clear.
    """
    inside, _ = _corridor(grid, _path_vertices(traj, start), corridor_halfwidth)
    points = traj.as_array()
    if len(inside) == 0:
        return [(k, math.inf) for k in range(len(points))]
    dists = np.linalg.norm(points[:, None, :] - inside[None, :, :], axis=2).min(axis=1)
    return [(k, float(d)) for k, d in enumerate(dists)]


def first_conflict_progress(
    grid: OccupancyGrid, traj: Trajectory, corridor_halfwidth: float, start: Optional[Vec2] = None
) -> Optional[float]:
    """Arc length from `start` to the nearest in-corridor obstacle, if any."""
    _, progress = _corridor(grid, _path_vertices(traj, start), corridor_halfwidth)
    return float(progress.min()) if progress.size else None


def stopping_allowance(
    grid: OccupancyGrid,
    scene: Scene,
    waypoint: Vec2,
    plan: Trajectory,
    corridor_halfwidth: float,
    margin: float,
    ego_size: Tuple[float, float] = EGO_FOOTPRINT,
) -> Optional[float]:
    """Path length the plan may cover so that the ego front stops `margin`
    short of the first obstacle in its corridor, measured in the frame
    `imagine` uses for `waypoint`; None when the corridor is clear.
    """
    vertices = np.vstack([scene.ego.position.as_array(), plan.as_array()])
    framed = to_imagined_frame(scene, waypoint, vertices)
    progress = first_conflict_progress(
        grid, Trajectory.from_array(framed[1:], plan.step_s), corridor_halfwidth, Vec2.of(framed[0])
    )
    if progress is None:
        return None
    return max(0.0, progress - margin - ego_size[0] / 2)


def _agent_box(agent: AgentState) -> np.ndarray:
    return box_corners(agent.position.as_array(), agent.footprint[0], agent.footprint[1], agent.yaw)


def check_collision(scene: Scene, ego_pose: Pose, ego_size: Tuple[float, float] = EGO_FOOTPRINT) -> bool:
    """Oriented ego box against agent boxes and boundary segments; touching collides."""
    position, heading = ego_pose
    center = position.as_array()
    ego_box = box_corners(center, ego_size[0], ego_size[1], heading)
    ego_radius = math.hypot(*ego_size) / 2
    for agent in scene.agents:
        reach = ego_radius + math.hypot(*agent.footprint) / 2
        if np.linalg.norm(agent.position.as_array() - center) > reach + 1e-9:
            continue
        if convex_overlap(ego_box, _agent_box(agent)):
            return True
    for seg in scene.boundaries:
        segment = np.array([seg.start.as_array(), seg.end.as_array()])
        if point_segment_distance(center[None, :], segment[0], segment[1])[0] > ego_radius + 1e-9:
            continue
        if convex_overlap(ego_box, segment):
            return True
    return False


def trajectory_poses(traj: Trajectory, ego: EgoState) -> List[Pose]:
    """Ego pose at each waypoint, heading from the incoming displacement."""
    poses: List[Pose] = []
    previous, heading = ego.position.as_array(), ego.heading
    for point in traj.points:
        p = point.as_array()
        heading = heading_from_displacement(p - previous, heading)
        poses.append((point, heading))
        previous = p
    return poses


def collisions_along(scene: Scene, traj: Trajectory, ego_size: Tuple[float, float] = EGO_FOOTPRINT) -> List[bool]:
    """Per-step collision flags against the ground-truth world rollout."""
    worlds = rollout_world(scene, len(traj), traj.step_s)
    return [check_collision(world, pose, ego_size) for world, pose in zip(worlds, trajectory_poses(traj, scene.ego))]
