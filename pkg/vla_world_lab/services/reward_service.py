"""Rule-based reward verifiers and their weighted total.

Components are computed on whatever segments parse; a missing or
malformed segment scores zero for its own component only.
"""
import math
from typing import Dict, Optional, Sequence, Union

import numpy as np

from vla_world_lab.core.errors import PreconditionError
from vla_world_lab.schemas.dataset import DatasetRecord
from vla_world_lab.schemas.sample import StructuredSample
from vla_world_lab.schemas.scene import ActionLabel, ShortPrediction, Trajectory, Vec2
from vla_world_lab.schemas.training import RewardBreakdown, RewardConfig, RewardWeights
from vla_world_lab.schemas.world import Codebook, TokenSequence
from vla_world_lab.utils.grammar import check_format, extract_segments, serialize
from vla_world_lab.utils.kinematics import mean_jerk
from vla_world_lab.utils.world_engine import DEFAULT_CODEBOOK


def r_format(text: Union[str, bytes]) -> float:
    return 1.0 if check_format(text).ok else 0.0


def r_pred(short: ShortPrediction, gt_short: ShortPrediction, final: Trajectory, sigma: float = 0.5) -> float:
    """Accuracy against the ground-truth waypoint and agreement with the
    plan's first waypoint, halved on a direction mismatch.
    """
    if sigma <= 0:
        raise PreconditionError(f"sigma must be positive, got {sigma}")
    p = short.waypoint.as_array()
    accuracy = math.exp(-float(np.linalg.norm(p - gt_short.waypoint.as_array())) / sigma)
    consistency = math.exp(-float(np.linalg.norm(p - final.points[0].as_array())) / sigma)
    match = 1.0 if short.direction == gt_short.direction else 0.5
    return match * (0.5 * accuracy + 0.5 * consistency)


def r_visual(tokens: TokenSequence, required_len: int, codebook: Codebook = DEFAULT_CODEBOOK) -> float:
    if len(tokens) != required_len or required_len == 0:
        return 0.0
    ids = tokens.as_array()
    return float(np.count_nonzero((ids >= 0) & (ids < codebook.size))) / required_len


def r_action(pred: ActionLabel, gt: ActionLabel) -> float:
    """F1 between the {lateral, longitudinal} value sets."""
    predicted = {pred.lateral.value, pred.longitudinal.value}
    truth = {gt.lateral.value, gt.longitudinal.value}
    if not predicted and not truth:
        return 1.0
    if not predicted or not truth:
        return 0.0
    hits = len(predicted & truth)
    if hits == 0:
        return 0.0
    precision, recall = hits / len(predicted), hits / len(truth)
    return 2 * precision * recall / (precision + recall)


def r_traj(
    traj: Trajectory,
    gt: Trajectory,
    v0: Vec2,
    a0: Vec2,
    sigma_t: float = 1.0,
    sigma_j: float = 2.0,
    start: Optional[Vec2] = None,
) -> float:
    if len(traj) != len(gt):
        raise PreconditionError(f"trajectory length {len(traj)} != ground truth length {len(gt)}")
    if sigma_t <= 0 or sigma_j <= 0:
        raise PreconditionError("sigma_t and sigma_j must be positive")
    ade = float(np.linalg.norm(traj.as_array() - gt.as_array(), axis=1).mean())
    jerk = mean_jerk(traj, v0, a0, start)
    return math.exp(-ade / sigma_t) * math.exp(-jerk / sigma_j)


def total_reward(b: RewardBreakdown, w: RewardWeights) -> float:
    return float(np.dot(w.as_tuple(), [b.r_fmt, b.r_pred, b.r_vis, b.r_act, b.r_traj]))


class RewardEngine:
    """Scores model text against a dataset record."""

    def __init__(self, config: RewardConfig = RewardConfig(), required_len: int = 1024, codebook: Codebook = DEFAULT_CODEBOOK):
        self.config = config
        self.required_len = required_len
        self.codebook = codebook

    def breakdown(self, components: Dict[str, float]) -> RewardBreakdown:
        partial = RewardBreakdown(**components)
        return partial.model_copy(update={"total": total_reward(partial, self.config.weights)})

    def score_text(self, text: Union[str, bytes], record: DatasetRecord) -> RewardBreakdown:
        cfg = self.config
        segments = extract_segments(text, len(record.gt_trajectory))
        prediction: Optional[ShortPrediction] = segments.get("Prediction")
        visual: Optional[TokenSequence] = segments.get("Visual")
        action: Optional[ActionLabel] = segments.get("Action")
        answer: Optional[Trajectory] = segments.get("Answer")
        ego = record.scene.ego

        components = {
            "r_fmt": r_format(text),
            "r_pred": 0.0,
            "r_vis": r_visual(visual, self.required_len, self.codebook) if visual is not None else 0.0,
            "r_act": r_action(action, record.gt_action) if action is not None else 0.0,
            "r_traj": 0.0,
        }
        if prediction is not None and answer is not None:
            components["r_pred"] = r_pred(prediction, record.gt_short, answer, cfg.sigma_pred_m)
        if answer is not None and len(answer) == len(record.gt_trajectory):
            components["r_traj"] = r_traj(
                answer,
                record.gt_trajectory,
                ego.velocity,
                ego.acceleration,
                cfg.sigma_traj_m,
                cfg.sigma_jerk,
                start=ego.position,
            )
        return self.breakdown(components)

    def score_sample(self, sample: StructuredSample, record: DatasetRecord) -> RewardBreakdown:
        return self.score_text(serialize(sample), record)

    def component_means(self, scores: Sequence[RewardBreakdown]) -> Dict[str, float]:
        if not scores:
            return {}
        keys = list(scores[0].components()) + ["total"]
        return {k: float(np.mean([getattr(s, k) for s in scores])) for k in keys}
