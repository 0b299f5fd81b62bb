"""Deterministic text for the Perception and Think segments."""
import math
from typing import List, Tuple

import numpy as np

from vla_world_lab.schemas.scene import Scene
from vla_world_lab.utils.geometry import sector_index

_SECTOR_WORDS = ("ahead", "ahead-left", "left", "behind-left", "behind", "behind-right", "right", "ahead-right")


def perception_text(scene: Scene) -> str:
    ego = scene.ego
    parts = [f"ego speed {ego.velocity.norm():.1f} m/s"]
    if not scene.agents:
        parts.append("no dynamic agents")
    else:
        offsets = np.array([a.position.as_array() - ego.position.as_array() for a in scene.agents])
        sectors = sector_index(offsets, ego.heading)
        ranked = sorted(zip(np.linalg.norm(offsets, axis=1), sectors, scene.agents), key=lambda t: (t[0], t[2].id))
        described = [f"{agent.kind.value} {_SECTOR_WORDS[int(s)]} at {d:.1f} m" for d, s, agent in ranked]
        parts.append(f"{len(scene.agents)} agents: " + ", ".join(described))
    if scene.boundaries:
        parts.append(f"{len(scene.boundaries)} road boundaries")
    return "; ".join(parts)


def think_text(conflicts: List[Tuple[int, float]], step_s: float, halfwidth: float) -> str:
    hits = [(k, d) for k, d in conflicts if math.isfinite(d)]
    horizon_s = len(conflicts) * step_s
    if not hits:
        return f"imagined frame shows a clear corridor over {horizon_s:.1f} s; keep the plan"
    step, distance = min(hits, key=lambda kd: (kd[1], kd[0]))
    if distance <= halfwidth:
        return (
            f"imagined frame shows an obstacle on the path near step {step + 1} "
            f"({distance:.1f} m); slow down and stop short of it"
        )
    return (
        f"imagined frame shows an obstacle in the corridor, closest {distance:.1f} m "
        f"at step {step + 1}; proceed with caution"
    )
