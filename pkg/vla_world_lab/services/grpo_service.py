"""Group Relative Policy Optimization over the closed-form policy heads."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from vla_world_lab.core.errors import DataIOError, NumericalError, PreconditionError
from vla_world_lab.schemas.dataset import DatasetRecord
from vla_world_lab.schemas.sample import StructuredSample
from vla_world_lab.schemas.scene import MissionGoal, Scene
from vla_world_lab.schemas.training import REWARD_COMPONENTS, AdvantageSet, GrpoConfig, RewardBreakdown, StepStats
from vla_world_lab.services.metrics_service import l2_report
from vla_world_lab.services.policy_service import (
    HeadInputs,
    KlTerms,
    PolicyParams,
    PolicyService,
    PromptContext,
    Rollout,
)

logger = logging.getLogger(__name__)

Scorer = Callable[[StructuredSample, DatasetRecord], RewardBreakdown]

LOG_COLUMNS = ("step", "mean_reward") + REWARD_COMPONENTS + ("kl", "grad_norm", "probe_l2_avg")


def advantages(rewards: Sequence[float], eps: float = 1e-8) -> AdvantageSet:
    """Group-standardized rewards with the population standard deviation,
    floored at `eps`; identical rewards give all-zero advantages.
    """
    r = np.asarray(rewards, dtype=float)
    if len(r) < 2:
        raise PreconditionError(f"a group needs at least 2 rewards, got {len(r)}")
    mu = float(r.mean())
    sigma = float(r.std())
    if np.ptp(r) == 0.0:
        return AdvantageSet(values=[0.0] * len(r), mean=mu, std=sigma)
    return AdvantageSet(values=[float(v) for v in (r - mu) / max(sigma, eps)], mean=mu, std=sigma)


def surrogate_term(logp_new: float, logp_old: float, advantage: float, clip_eps: float) -> float:
    ratio = math.exp(logp_new - logp_old)
    clipped = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
    return min(ratio * advantage, clipped * advantage)


def surrogate_slope(logp_new: float, logp_old: float, advantage: float, clip_eps: float) -> float:
    """d surrogate_term / d logp_new; zero where the clipped branch is active."""
    ratio = math.exp(logp_new - logp_old)
    if (advantage > 0 and ratio > 1.0 + clip_eps) or (advantage < 0 and ratio < 1.0 - clip_eps):
        return 0.0
    return ratio * advantage


def kl_breakdown(
    policy: PolicyService,
    params: PolicyParams,
    ref_params: PolicyParams,
    scene: Scene,
    goal: MissionGoal,
    rollout: Rollout,
) -> KlTerms:
    """Exact categorical KL(params || ref) over every distribution the rollout visited."""
    terms, _ = policy.kl_and_grad(params, ref_params, policy.rollout_inputs(rollout, scene, goal))
    return terms


def kl_exact(
    policy: PolicyService,
    params: PolicyParams,
    ref_params: PolicyParams,
    scene: Scene,
    goal: MissionGoal,
    rollout: Rollout,
) -> float:
    return kl_breakdown(policy, params, ref_params, scene, goal, rollout).total


@dataclass(frozen=True)
class _Scored:
    record: DatasetRecord
    rollout: Rollout
    inputs: HeadInputs
    advantage: float


class GrpoTrainer:
    """Samples groups, scores them, and ascends the clipped objective minus beta * KL."""

    def __init__(self, policy: PolicyService, config: GrpoConfig, scorer: Scorer):
        self.policy = policy
        self.config = config
        self.scorer = scorer

    # ------------------------------
    # Sampling
    # ------------------------------

    def rollout_seeds(self, step: int, count: int) -> List[int]:
        state = np.random.SeedSequence([self.config.seed, step]).generate_state(count, dtype=np.uint32)
        return [int(s) for s in state]

    def sample_group(
        self, params: PolicyParams, record: DatasetRecord, seeds: Sequence[int], prompt: Optional[PromptContext] = None
    ) -> List[Rollout]:
        prompt = prompt or self.policy.prompt_context(record.scene, record.goal)

        def draw(seed: int) -> Rollout:
            return self.policy.sample_rollout(params, record.scene, record.goal, seed, prompt=prompt)

        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(draw, seeds))
        return [draw(seed) for seed in seeds]

    # ------------------------------
    # Update
    # ------------------------------

    def _objective_gradient(
        self, params: PolicyParams, ref_params: PolicyParams, batch: Sequence[_Scored]
    ) -> Tuple[PolicyParams, float]:
        cfg = self.config
        cells = self.policy.grid.num_cells
        grad = params.zeros_like()
        kl_sum = 0.0
        for item in batch:
            rollout, inputs, adv = item.rollout, item.inputs, item.advantage
            gen, act, traj = self.policy.component_log_probs(params, inputs)
            # the visual block counts as one token: mean log-ratio per cell
            gen_coef = 0.0
            if inputs.visual is not None:
                gen_coef = surrogate_slope(gen / cells, rollout.logp_generation / cells, adv, cfg.clip_eps) / cells
            act_coef = surrogate_slope(act, rollout.logp_action, adv, cfg.clip_eps)
            traj_coefs = np.array(
                [surrogate_slope(new, old, adv, cfg.clip_eps) for new, old in zip(traj, rollout.logp_trajectory)]
            )
            score = self.policy.weighted_score(params, inputs, gen_coef, act_coef, traj_coefs)
            grad = grad.axpy(1.0 / len(batch), score)
            if cfg.kl_coef > 0:
                terms, kl_grad = self.policy.kl_and_grad(params, ref_params, inputs, gen_weight=1.0 / cells)
                grad = grad.axpy(-cfg.kl_coef / len(batch), kl_grad)
                kl_sum += terms.total
        return grad, kl_sum / len(batch)

    def grpo_step(
        self, params: PolicyParams, ref_params: PolicyParams, records: Sequence[DatasetRecord], step: int = 0
    ) -> Tuple[PolicyParams, StepStats]:
        cfg = self.config
        if not records:
            raise PreconditionError("grpo_step needs at least one prompt")
        seeds = self.rollout_seeds(step, len(records) * cfg.group_size)
        batch: List[_Scored] = []
        prompt_means, prompt_stds = [], []
        scores: List[RewardBreakdown] = []
        for p, record in enumerate(records):
            prompt = self.policy.prompt_context(record.scene, record.goal)
            group = self.sample_group(params, record, seeds[p * cfg.group_size:(p + 1) * cfg.group_size], prompt)
            group_scores = [self.scorer(r.sample, record) for r in group]
            adv = advantages([s.total for s in group_scores], cfg.advantage_eps)
            prompt_means.append(adv.mean)
            prompt_stds.append(adv.std)
            scores.extend(group_scores)
            for rollout, a in zip(group, adv.values):
                inputs = self.policy.rollout_inputs(rollout, record.scene, record.goal, prompt)
                batch.append(_Scored(record, rollout, inputs, a))

        current, kl, grad_norm = params, 0.0, 0.0
        for epoch in range(cfg.inner_epochs):
            grad, kl_epoch = self._objective_gradient(current, ref_params, batch)
            if epoch == 0:
                kl = kl_epoch
            grad_norm = grad.norm()
            if not (grad.is_finite() and math.isfinite(grad_norm)):
                logger.error("Non-finite gradient at step %d epoch %d", step, epoch)
                raise NumericalError(f"non-finite gradient at GRPO step {step}")
            current = current.axpy(cfg.learning_rate, grad)

        stats = StepStats(
            step=step,
            prompt_means=prompt_means,
            prompt_stds=prompt_stds,
            mean_reward=float(np.mean([s.total for s in scores])),
            component_means={k: float(np.mean([getattr(s, k) for s in scores])) for k in REWARD_COMPONENTS},
            kl=kl,
            grad_norm=grad_norm,
        )
        return current, stats

    # ------------------------------
    # Training loop
    # ------------------------------

    def probe_l2(self, params: PolicyParams, probe: Sequence[DatasetRecord]) -> float:
        """Mean ST-P3 average L2 of greedy plans on held-out prompts."""
        values = []
        for record in probe:
            rollout = self.policy.sample_rollout(params, record.scene, record.goal, seed=0, greedy=True)
            values.append(l2_report(rollout.sample.answer, record.gt_trajectory).stp3_avg)
        return float(np.mean(values)) if values else float("nan")

    def expected_reward(self, params: PolicyParams, records: Sequence[DatasetRecord], step: int = 0) -> float:
        """Mean total reward of one sampled group per record. Groups draw from
        the seeds of `step`, so parameter snapshots compare on equal draws.
        """
        group = self.config.group_size
        if not records:
            raise PreconditionError("expected_reward needs at least one prompt")
        seeds = self.rollout_seeds(step, len(records) * group)
        totals = []
        for p, record in enumerate(records):
            for rollout in self.sample_group(params, record, seeds[p * group:(p + 1) * group]):
                totals.append(self.scorer(rollout.sample, record).total)
        return float(np.mean(totals))

    def train(
        self,
        params: PolicyParams,
        ref_params: PolicyParams,
        dataset: Sequence[DatasetRecord],
        probe: Sequence[DatasetRecord] = (),
    ) -> Tuple[PolicyParams, List[Dict[str, float]]]:
        cfg = self.config
        if not dataset:
            raise PreconditionError("training dataset is empty")
        rng = np.random.default_rng(cfg.seed)
        probe = list(probe)[: cfg.probe_size]
        order: List[int] = []
        rows: List[Dict[str, float]] = []
        for step in range(1, cfg.steps + 1):
            batch = []
            while len(batch) < min(cfg.prompts_per_step, len(dataset)):
                if not order:
                    order = [int(i) for i in rng.permutation(len(dataset))]
                batch.append(dataset[order.pop()])
            params, stats = self.grpo_step(params, ref_params, batch, step)
            probe_value = float("nan")
            if probe and (step % cfg.probe_every == 0 or step == cfg.steps):
                probe_value = self.probe_l2(params, probe)
            rows.append(
                {
                    "step": step,
                    "mean_reward": stats.mean_reward,
                    **stats.component_means,
                    "kl": stats.kl,
                    "grad_norm": stats.grad_norm,
                    "probe_l2_avg": probe_value,
                }
            )
            logger.info(
                "GRPO step %d/%d reward=%.4f kl=%.5f grad=%.4f",
                step, cfg.steps, stats.mean_reward, stats.kl, stats.grad_norm,
            )
        return params, rows


def write_training_log(rows: Sequence[Dict[str, float]], path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(list(rows), columns=list(LOG_COLUMNS))
        frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    except OSError as exc:
        raise DataIOError(f"cannot write training log {path}: {exc}") from exc
