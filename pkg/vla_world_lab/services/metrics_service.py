"""Evaluation protocols for plans, actions and generated frames."""
import logging
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy import linalg
from sklearn.metrics import precision_recall_fscore_support

from vla_world_lab.core.errors import NumericalError, PreconditionError
from vla_world_lab.schemas.dataset import DatasetRecord
from vla_world_lab.schemas.sample import StructuredSample
from vla_world_lab.schemas.scene import ActionLabel, Lateral, Longitudinal, Scene, Trajectory
from vla_world_lab.schemas.training import RewardConfig
from vla_world_lab.schemas.world import OccupancyGrid
from vla_world_lab.services.reward_service import RewardEngine
from vla_world_lab.utils.world_engine import EGO_FOOTPRINT, collisions_along, detokenize

logger = logging.getLogger(__name__)

# Reported horizons in seconds.
HORIZONS_S = (1.0, 2.0, 3.0)
ACTION_CLASSES = tuple(m.value for m in Lateral) + tuple(m.value for m in Longitudinal)
SHRINKAGE = 1e-6


class L2Report(BaseModel):
    per_step: List[float]
    stp3_at: Dict[str, float]
    uniad_at: Dict[str, float]
    stp3_avg: float
    uniad_avg: float


class CollisionReport(BaseModel):
    per_step: List[bool]

    @property
    def count(self) -> int:
        return sum(self.per_step)


class CollisionRates(BaseModel):
    per_step: List[float]
    stp3_at: Dict[str, float]
    uniad_at: Dict[str, float]
    stp3_avg: float
    uniad_avg: float


class EvaluationReport(BaseModel):
    l2_per_step: List[float]
    l2_stp3: Dict[str, float]
    l2_uniad: Dict[str, float]
    l2_stp3_avg: float
    l2_uniad_avg: float
    collisions: CollisionRates
    collision_count: int
    action_f1: Dict[str, float]
    frechet: Optional[float]
    rewards: Dict[str, float]


def _horizon_key(seconds: float) -> str:
    return f"{seconds:g}s"


def _horizon_indices(n_steps: int, step_s: float) -> List[Tuple[str, int]]:
    out = []
    for seconds in HORIZONS_S:
        index = int(round(seconds / step_s)) - 1
        if not 0 <= index < n_steps:
            raise PreconditionError(f"horizon {seconds:g}s needs {index + 1} steps, have {n_steps}")
        out.append((_horizon_key(seconds), index))
    return out


def _protocols(per_step: np.ndarray, step_s: float) -> Tuple[Dict[str, float], Dict[str, float]]:
    """ST-P3 averages every step up to the horizon; UniAD reads the step itself."""
    prefix = np.cumsum(per_step) / np.arange(1, len(per_step) + 1)
    stp3, uniad = {}, {}
    for key, index in _horizon_indices(len(per_step), step_s):
        stp3[key] = float(prefix[index])
        uniad[key] = float(per_step[index])
    return stp3, uniad


def l2_report(pred: Trajectory, gt: Trajectory) -> L2Report:
    if len(pred) != len(gt):
        raise PreconditionError(f"trajectory lengths differ: {len(pred)} vs {len(gt)}")
    per_step = np.linalg.norm(pred.as_array() - gt.as_array(), axis=1)
    stp3, uniad = _protocols(per_step, gt.step_s)
    return L2Report(
        per_step=[float(v) for v in per_step],
        stp3_at=stp3,
        uniad_at=uniad,
        stp3_avg=float(np.mean(list(stp3.values()))),
        uniad_avg=float(np.mean(list(uniad.values()))),
    )


def collision_report(pred: Trajectory, scene: Scene, ego_size: Tuple[float, float] = EGO_FOOTPRINT) -> CollisionReport:
    """Ego boxes at each waypoint against the ground-truth world rollout."""
    return CollisionReport(per_step=collisions_along(scene, pred, ego_size))


def collision_rates(reports: Sequence[CollisionReport], step_s: float = 0.5) -> CollisionRates:
    if not reports:
        raise PreconditionError("no collision reports to aggregate")
    per_step = np.mean(np.array([r.per_step for r in reports], dtype=float), axis=0)
    stp3, uniad = _protocols(per_step, step_s)
    return CollisionRates(
        per_step=[float(v) for v in per_step],
        stp3_at=stp3,
        uniad_at=uniad,
        stp3_avg=float(np.mean(list(stp3.values()))),
        uniad_avg=float(np.mean(list(uniad.values()))),
    )


def action_f1(pred: Sequence[ActionLabel], gt: Sequence[ActionLabel]) -> Dict[str, float]:
    """One-vs-rest F1 per class; a class absent from both sides scores 1."""
    if len(pred) != len(gt):
        raise PreconditionError(f"label counts differ: {len(pred)} vs {len(gt)}")
    scores: Dict[str, float] = {}
    for axis, classes in (("lateral", [m.value for m in Lateral]), ("longitudinal", [m.value for m in Longitudinal])):
        y_true = [getattr(label, axis).value for label in gt]
        y_pred = [getattr(label, axis).value for label in pred]
        if y_true:
            _, _, f1, _ = precision_recall_fscore_support(
                y_true, y_pred, labels=classes, average=None, zero_division=1.0
            )
        else:
            f1 = np.ones(len(classes))
        for name, value in zip(classes, f1):
            vacuous = name not in y_true and name not in y_pred
            scores[name] = 1.0 if vacuous else float(value)
    return scores


def frechet_from_moments(mu_a: np.ndarray, cov_a: np.ndarray, mu_b: np.ndarray, cov_b: np.ndarray) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)."""
    mu_a, mu_b = np.atleast_1d(np.asarray(mu_a, dtype=float)), np.atleast_1d(np.asarray(mu_b, dtype=float))
    cov_a, cov_b = np.atleast_2d(np.asarray(cov_a, dtype=float)), np.atleast_2d(np.asarray(cov_b, dtype=float))
    if mu_a.shape != mu_b.shape or cov_a.shape != cov_b.shape or cov_a.shape != (len(mu_a), len(mu_a)):
        raise PreconditionError("mean and covariance shapes do not agree")
    root_a = _psd_sqrt(cov_a)
    middle = _eigvals_psd(root_a @ cov_b @ root_a)
    trace = np.trace(cov_a) + np.trace(cov_b) - 2.0 * float(np.sum(np.sqrt(middle)))
    return max(float(np.sum((mu_a - mu_b) ** 2) + trace), 0.0)


def _eigvals_psd(matrix: np.ndarray) -> np.ndarray:
    symmetric = (matrix + matrix.T) / 2
    values = linalg.eigh(symmetric, eigvals_only=True)
    tol = 1e-9 * max(1.0, float(np.abs(values).max(initial=0.0)))
    if values.min(initial=0.0) < -tol:
        raise NumericalError(f"covariance is not positive semi-definite (eigenvalue {values.min():.3g})")
    return np.clip(values, 0.0, None)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    symmetric = (matrix + matrix.T) / 2
    values, vectors = linalg.eigh(symmetric)
    _eigvals_psd(symmetric)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def frechet_distance(set_a: np.ndarray, set_b: np.ndarray) -> float:
    """Gaussian Fréchet distance between two feature sets (rows are samples)."""
    a, b = np.atleast_2d(np.asarray(set_a, dtype=float)), np.atleast_2d(np.asarray(set_b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise PreconditionError(f"feature dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    if len(a) < 2 or len(b) < 2:
        raise PreconditionError("each feature set needs at least two samples")
    dim = a.shape[1]
    cov_a = np.cov(a, rowvar=False).reshape(dim, dim) + SHRINKAGE * np.eye(dim)
    cov_b = np.cov(b, rowvar=False).reshape(dim, dim) + SHRINKAGE * np.eye(dim)
    return frechet_from_moments(a.mean(axis=0), cov_a, b.mean(axis=0), cov_b)


@lru_cache(maxsize=4)
def _projection(seed: int, rows: int, d: int) -> np.ndarray:
    matrix = np.random.default_rng(seed).standard_normal((rows, d))
    matrix.setflags(write=False)
    return matrix


def grid_features(grid: OccupancyGrid, seed: int = 0, d: int = 64, projection: Optional[np.ndarray] = None) -> np.ndarray:
    """Fixed random projection of the one-hot cell classes, scaled by 1/sqrt(N*V)."""
    if d < 1:
        raise PreconditionError(f"feature dimension must be >= 1, got {d}")
    n, v = grid.spec.num_cells, grid.spec.num_classes
    matrix = _projection(seed, n * v, d) if projection is None else np.asarray(projection, dtype=float)
    rows = np.arange(n) * v + grid.as_array()
    return matrix[rows].sum(axis=0) / np.sqrt(n * v)


class MetricsService:
    """Dataset-level evaluation of generated samples against their records."""

    def __init__(self, rewards: RewardConfig = RewardConfig(), feature_dim: int = 64, projection_seed: int = 0):
        self.rewards = rewards
        self.feature_dim = feature_dim
        self.projection_seed = projection_seed

    def frechet_between(self, generated: Sequence[OccupancyGrid], reference: Sequence[OccupancyGrid]) -> Optional[float]:
        if len(generated) < 2 or len(reference) < 2:
            return None
        fa = np.stack([grid_features(g, self.projection_seed, self.feature_dim) for g in generated])
        fb = np.stack([grid_features(g, self.projection_seed, self.feature_dim) for g in reference])
        return frechet_distance(fa, fb)

    def evaluate_samples(self, records: Sequence[DatasetRecord], samples: Sequence[StructuredSample]) -> EvaluationReport:
        if len(records) != len(samples) or not records:
            raise PreconditionError("need one sample per record and at least one record")
        l2 = [l2_report(s.answer, r.gt_trajectory) for r, s in zip(records, samples)]
        collisions = [collision_report(s.answer, r.scene) for r, s in zip(records, samples)]
        engine = RewardEngine(self.rewards, required_len=records[0].gt_future_grid.spec.num_cells)
        scores = [engine.score_sample(s, r) for r, s in zip(records, samples)]

        generated, reference = [], []
        for record, sample in zip(records, samples):
            spec = record.gt_future_grid.spec
            try:
                generated.append(detokenize(sample.visual, spec))
            except ValueError:
                logger.debug("Skipping undecodable visual segment in Fréchet set")
                continue
            reference.append(record.gt_future_grid)

        step_s = records[0].gt_trajectory.step_s
        return EvaluationReport(
            l2_per_step=[float(v) for v in np.mean([r.per_step for r in l2], axis=0)],
            l2_stp3={k: float(np.mean([r.stp3_at[k] for r in l2])) for k in l2[0].stp3_at},
            l2_uniad={k: float(np.mean([r.uniad_at[k] for r in l2])) for k in l2[0].uniad_at},
            l2_stp3_avg=float(np.mean([r.stp3_avg for r in l2])),
            l2_uniad_avg=float(np.mean([r.uniad_avg for r in l2])),
            collisions=collision_rates(collisions, step_s),
            collision_count=sum(c.count for c in collisions),
            action_f1=action_f1([s.action for s in samples], [r.gt_action for r in records]),
            frechet=self.frechet_between(generated, reference),
            rewards=engine.component_means(scores),
        )
