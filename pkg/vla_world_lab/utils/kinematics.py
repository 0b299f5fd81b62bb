"""Physics-grounded short-term ego prediction.

The current velocity and the inertial acceleration come from finite
differences over the last three history points; the command's ideal
displacement gives a goal acceleration; both are blended and integrated
once over the lookahead.
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from vla_world_lab.core.config import DT_S
from vla_world_lab.core.errors import PreconditionError
from vla_world_lab.schemas.scene import Lateral, MissionGoal, ShortPrediction, Trajectory, Vec2


class KinematicState(BaseModel):
    model_config = ConfigDict(frozen=True)

    velocity: Vec2
    inertial_accel: Vec2


class FusionConfig(BaseModel):
    """Blend between inertia (0) and command intention (1)."""

    model_config = ConfigDict(frozen=True)

    fusion_weight: float = Field(0.5, ge=0.0, le=1.0)
    lookahead_s: float = Field(0.5, gt=0.0)
    # Fixed per-goal displacements; goals left out use the speed-scaled defaults.
    goal_offsets: Dict[MissionGoal, Vec2] = Field(default_factory=dict)
    heading_threshold_deg: float = Field(10.0, ge=0.0)


def estimate_state(history: Sequence[Vec2], dt: float = DT_S) -> KinematicState:
    if dt <= 0:
        raise PreconditionError(f"dt must be positive, got {dt}")
    if len(history) < 3:
        raise PreconditionError(f"history needs at least 3 points, got {len(history)}")
    p2, p1, p0 = (p.as_array() for p in history[-3:])
    v_t = (p0 - p1) / dt
    v_prev = (p1 - p2) / dt
    return KinematicState(velocity=Vec2.of(v_t), inertial_accel=Vec2.of((v_t - v_prev) / dt))


def goal_acceleration(state: KinematicState, ideal_disp: Vec2, lookahead_s: float) -> Vec2:
    if lookahead_s <= 0:
        raise PreconditionError(f"lookahead must be positive, got {lookahead_s}")
    tau = lookahead_s
    return Vec2.of((2.0 / tau**2) * (ideal_disp.as_array() - state.velocity.as_array() * tau))


def fuse_acceleration(a_hist: Vec2, a_goal: Vec2, weight: float) -> Vec2:
    if not 0.0 <= weight <= 1.0:
        raise PreconditionError(f"fusion weight must lie in [0, 1], got {weight}")
    return Vec2.of((1.0 - weight) * a_hist.as_array() + weight * a_goal.as_array())


def predict_short(p_t: Vec2, state: KinematicState, a_eff: Vec2, lookahead_s: float) -> Vec2:
    if lookahead_s <= 0:
        raise PreconditionError(f"lookahead must be positive, got {lookahead_s}")
    tau = lookahead_s
    return Vec2.of(p_t.as_array() + state.velocity.as_array() * tau + 0.5 * a_eff.as_array() * tau**2)


def ideal_displacement(goal: MissionGoal, speed: float, cfg: FusionConfig) -> Vec2:
    """Displacement a command asks for over one lookahead."""
    if goal in cfg.goal_offsets:
        return cfg.goal_offsets[goal]
    tau = cfg.lookahead_s
    if goal == Lateral.FORWARD:
        return Vec2(x=0.0, y=max(speed, 1.0) * tau)
    lateral = 0.25 * speed * tau
    return Vec2(x=-lateral if goal == Lateral.LEFT else lateral, y=speed * tau * 0.97)


def heading_label(v: Vec2, threshold_deg: float = 10.0) -> Lateral:
    """Bearing from +y, positive to the left; at rest the label is forward."""
    if v.norm() <= 1e-12:
        return Lateral.FORWARD
    bearing = math.degrees(math.atan2(-v.x, v.y))
    if bearing > threshold_deg:
        return Lateral.LEFT
    if bearing < -threshold_deg:
        return Lateral.RIGHT
    return Lateral.FORWARD


def predict_from_history(
    history: Sequence[Vec2], goal: MissionGoal, cfg: FusionConfig, dt: float = DT_S
) -> ShortPrediction:
    state = estimate_state(history, dt)
    ideal = ideal_displacement(goal, state.velocity.norm(), cfg)
    a_goal = goal_acceleration(state, ideal, cfg.lookahead_s)
    a_eff = fuse_acceleration(state.inertial_accel, a_goal, cfg.fusion_weight)
    p_t = history[-1]
    waypoint = predict_short(p_t, state, a_eff, cfg.lookahead_s)
    displacement = Vec2.of(waypoint.as_array() - p_t.as_array())
    return ShortPrediction(waypoint=waypoint, direction=heading_label(displacement, cfg.heading_threshold_deg))


def jerk_profile(traj: Trajectory, v0: Vec2, a0: Vec2) -> List[float]:
    """Per-step jerk magnitudes reconstructed from waypoints.

    Velocities are waypoint differences seeded by v0, accelerations are
    velocity differences seeded by a0; the profile has len(traj) - 1 entries.
    """
    if len(traj) < 3:
        raise PreconditionError(f"jerk profile needs at least 3 waypoints, got {len(traj)}")
    dt = traj.step_s
    points = traj.as_array()
    velocities = np.vstack([v0.as_array(), np.diff(points, axis=0) / dt])
    accels = np.vstack([a0.as_array(), np.diff(velocities, axis=0) / dt])
    return [float(j) for j in np.linalg.norm(np.diff(accels, axis=0), axis=1) / dt]


def mean_jerk(traj: Trajectory, v0: Vec2, a0: Vec2, start: Optional[Vec2] = None) -> float:
    """Mean of `jerk_profile`; with `start`, the step from the current
    position counts as the first segment of the path.
    """
    if start is not None:
        traj = Trajectory(step_s=traj.step_s, points=[start, *traj.points])
    return float(np.mean(jerk_profile(traj, v0, a0)))


def constant_acceleration_track(p_t: Vec2, v_t: Vec2, a: Vec2, n: int, dt: float = DT_S) -> List[Vec2]:
    """n positions (oldest first) of a discrete constant-acceleration track
    ending at p_t with finite-difference velocity v_t.
    """
    positions = [p_t.as_array()]
    velocity = v_t.as_array()
    for _ in range(n - 1):
        positions.append(positions[-1] - velocity * dt)
        velocity = velocity - a.as_array() * dt
    return [Vec2.of(p) for p in reversed(positions)]
