"""Discrete per-step motion tokens for the long-horizon plan.

A token fixes an acceleration level and a yaw-rate level for one step.
Decoding starts from the ego's current speed: each step updates the speed
first (clipped to [0, speed cap]), then turns the heading and moves along
it. A stopped ego does not turn.
"""
import math
from typing import List, Sequence, Tuple

import numpy as np

from vla_world_lab.core.config import DT_S
from vla_world_lab.schemas.scene import EgoState, Lateral, Trajectory

ACCEL_LEVELS: Tuple[float, ...] = (-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0)
# left, straight, right
YAW_RATE_LEVELS: Tuple[float, ...] = (0.5, 0.0, -0.5)
CURVATURE_OF = {Lateral.LEFT: 0, Lateral.FORWARD: 1, Lateral.RIGHT: 2}
STRAIGHT = 1
SPEED_CAP = 12.0

# (position, heading, speed)
Motion = Tuple[np.ndarray, float, float]


class TrajectoryVocabulary:
    def __init__(
        self,
        accels: Sequence[float] = ACCEL_LEVELS,
        yaw_rates: Sequence[float] = YAW_RATE_LEVELS,
        step_s: float = DT_S,
        speed_cap: float = SPEED_CAP,
    ):
        self.accels = tuple(float(a) for a in accels)
        self.yaw_rates = tuple(float(w) for w in yaw_rates)
        self.step_s = step_s
        self.speed_cap = speed_cap
        self._preference = sorted(range(self.size), key=self._preference_key)

    @property
    def size(self) -> int:
        return len(self.accels) * len(self.yaw_rates)

    def token(self, accel_idx: int, curvature_idx: int) -> int:
        return accel_idx * len(self.yaw_rates) + curvature_idx

    def split(self, token: int) -> Tuple[int, int]:
        return divmod(int(token), len(self.yaw_rates))

    def _preference_key(self, token: int) -> Tuple[bool, float, int]:
        # straight first, then the gentlest acceleration, braking before speeding up
        accel_idx, curvature_idx = self.split(token)
        return curvature_idx != STRAIGHT, abs(self.accels[accel_idx]), accel_idx

    def accel_index(self, accel: float) -> int:
        return int(np.argmin([abs(a - accel) for a in self.accels]))

    def _advance(self, motion: Motion, token: int) -> Motion:
        position, heading, speed = motion
        accel_idx, curvature_idx = self.split(token)
        speed = min(max(speed + self.accels[accel_idx] * self.step_s, 0.0), self.speed_cap)
        if speed > 0:
            heading = heading + self.yaw_rates[curvature_idx] * self.step_s
        step = speed * self.step_s * np.array([math.cos(heading), math.sin(heading)])
        return position + step, heading, speed

    def _start(self, ego: EgoState) -> Motion:
        return ego.position.as_array(), ego.heading, ego.velocity.norm()

    def rollout(self, tokens: Sequence[int], ego: EgoState = EgoState()) -> List[Motion]:
        motion = self._start(ego)
        motions = []
        for token in tokens:
            if not 0 <= int(token) < self.size:
                raise ValueError(f"trajectory token {token} outside vocabulary of {self.size}")
            motion = self._advance(motion, token)
            motions.append(motion)
        return motions

    def decode(self, tokens: Sequence[int], ego: EgoState = EgoState()) -> Trajectory:
        motions = self.rollout(tokens, ego)
        return Trajectory.from_array(np.array([m[0] for m in motions]), self.step_s)

    def speeds(self, tokens: Sequence[int], ego: EgoState = EgoState()) -> List[float]:
        """Speed held over each step of the decoded plan."""
        return [m[2] for m in self.rollout(tokens, ego)]

    def encode(self, traj: Trajectory, ego: EgoState = EgoState()) -> List[int]:
        """Greedy nearest-token reconstruction; exact on decoded paths."""
        motion = self._start(ego)
        tokens = []
        for target in traj.as_array():
            candidates = [self._advance(motion, t) for t in self._preference]
            errors = [float(np.linalg.norm(c[0] - target)) for c in candidates]
            best = int(np.argmin(errors))
            tokens.append(self._preference[best])
            motion = candidates[best]
        return tokens


DEFAULT_VOCAB = TrajectoryVocabulary()
