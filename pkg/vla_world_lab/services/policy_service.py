"""Desk-scale VLA policy: three linear-softmax heads over fixed features.

Every sampled component (visual tokens, the joint action, per-step
trajectory tokens) is a finite categorical, so log-probabilities, their
gradients and KL terms are all closed form.
"""
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from vla_world_lab.core.config import DT_S, HORIZON
from vla_world_lab.core.errors import CheckpointError, DataIOError
from vla_world_lab.schemas.sample import StructuredSample
from vla_world_lab.schemas.scene import (
    ActionLabel,
    Lateral,
    Longitudinal,
    MissionGoal,
    Scene,
    ShortPrediction,
    Trajectory,
    Vec2,
)
from vla_world_lab.schemas.training import PolicyConfig
from vla_world_lab.schemas.world import Codebook, GridSpec, OccupancyGrid, TokenSequence
from vla_world_lab.utils import categorical
from vla_world_lab.utils.geometry import resample_polyline, sector_index
from vla_world_lab.utils.kinematics import FusionConfig, estimate_state, predict_from_history
from vla_world_lab.utils.narration import perception_text, think_text
from vla_world_lab.utils.trajectory_vocab import DEFAULT_VOCAB, TrajectoryVocabulary
from vla_world_lab.utils.world_engine import (
    DEFAULT_CODEBOOK,
    corridor_conflicts,
    default_corridor_halfwidth,
    detokenize,
    imagine,
    render_grid,
    stopping_allowance,
    tokenize,
)

logger = logging.getLogger(__name__)

ACTION_LATERALS = (Lateral.FORWARD, Lateral.LEFT, Lateral.RIGHT)
ACTION_LONGITUDINALS = (Longitudinal.KEEP, Longitudinal.ACCELERATE, Longitudinal.DECELERATE, Longitudinal.STOP)
NUM_ACTIONS = len(ACTION_LATERALS) * len(ACTION_LONGITUDINALS)
ACTION_ONE_HOT_DIM = len(ACTION_LATERALS) + len(ACTION_LONGITUDINALS)

SECTORS = 8
DISTANCE_CAP_M = 16.0
# [speed, a_hist along the heading, goal one-hot x3, sector distances x8, bias]
FEATURE_DIM = 5 + SECTORS + 1
FEATURE_SCALE = np.array([8.0, 2.0, 1.0, 1.0, 1.0] + [DISTANCE_CAP_M] * SECTORS + [1.0])

CHECKPOINT_MAGIC = "vla-world-checkpoint"
CHECKPOINT_VERSION = 1
_REFINE_PASSES = 8


def action_index(label: ActionLabel) -> int:
    return ACTION_LATERALS.index(label.lateral) * len(ACTION_LONGITUDINALS) + ACTION_LONGITUDINALS.index(
        label.longitudinal
    )


def action_label(index: int) -> ActionLabel:
    lat, lon = divmod(int(index), len(ACTION_LONGITUDINALS))
    return ActionLabel(lateral=ACTION_LATERALS[lat], longitudinal=ACTION_LONGITUDINALS[lon])


def action_one_hot(index: int) -> np.ndarray:
    lat, lon = divmod(int(index), len(ACTION_LONGITUDINALS))
    out = np.zeros(ACTION_ONE_HOT_DIM)
    out[lat] = 1.0
    out[len(ACTION_LATERALS) + lon] = 1.0
    return out


@dataclass(frozen=True)
class PolicyParams:
    """Immutable parameter snapshot; updates return new snapshots."""

    w_gen: np.ndarray  # (V out, V in): column k holds logits for input class k
    b_gen: np.ndarray  # (V,)
    w_act: np.ndarray  # (actions, features)
    w_traj: np.ndarray  # (H, vocabulary, trajectory inputs)

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def initialize(
        cls, num_classes: int, vocab_size: int, horizon: int = HORIZON, scale: float = 0.01, seed: int = 0
    ) -> "PolicyParams":
        rng = np.random.default_rng(seed)
        return cls(
            w_gen=scale * rng.standard_normal((num_classes, num_classes)),
            b_gen=np.zeros(num_classes),
            w_act=scale * rng.standard_normal((NUM_ACTIONS, FEATURE_DIM)),
            w_traj=scale * rng.standard_normal((horizon, vocab_size, trajectory_input_dim(horizon))),
        )

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.names()}

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def axpy(self, scale: float, other: "PolicyParams", only: Optional[Iterable[str]] = None) -> "PolicyParams":
        """self + scale * other, restricted to `only` when given."""
        keep = set(self.names() if only is None else only)
        return PolicyParams(
            **{k: (v + scale * getattr(other, k)) if k in keep else v for k, v in self.arrays().items()}
        )

    def norm(self) -> float:
        return float(math.sqrt(sum(float(np.sum(v * v)) for v in self.arrays().values())))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays().values()])

    def with_flat(self, vector: np.ndarray) -> "PolicyParams":
        out, offset = {}, 0
        for name, value in self.arrays().items():
            out[name] = np.asarray(vector[offset:offset + value.size], dtype=float).reshape(value.shape)
            offset += value.size
        return PolicyParams(**out)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {k: v.shape for k, v in self.arrays().items()}

    def equals(self, other: "PolicyParams") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self.names())


def trajectory_input_dim(horizon: int = HORIZON) -> int:
    """Scaled features, per-step conflict evidence plus a flag, action one-hot."""
    return FEATURE_DIM + horizon + 1 + ACTION_ONE_HOT_DIM


class Rollout(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample: StructuredSample
    trajectory_tokens: Tuple[int, ...]
    initial_trajectory: Trajectory
    logp_generation: float
    logp_action: float
    logp_trajectory: Tuple[float, ...]
    seed: int

    @property
    def logp_total(self) -> float:
        return self.logp_generation + self.logp_action + float(sum(self.logp_trajectory))


@dataclass(frozen=True)
class PromptContext:
    """Everything about a (scene, goal) prompt that does not depend on sampling."""

    scene: Scene
    goal: MissionGoal
    features: np.ndarray
    x: np.ndarray
    short: ShortPrediction
    condition: OccupancyGrid
    perception: str


@dataclass(frozen=True)
class HeadInputs:
    """Inputs and picked indices for the three heads of one sequence."""

    x: np.ndarray
    z: np.ndarray
    input_classes: Optional[np.ndarray]
    visual: Optional[np.ndarray]
    action: int
    trajectory: np.ndarray


@dataclass(frozen=True)
class Reflection:
    psi: np.ndarray
    conflicts: List[Tuple[int, float]]


@dataclass(frozen=True)
class SupervisedExample:
    inputs: HeadInputs


@dataclass(frozen=True)
class SupervisedResult:
    params: PolicyParams
    loss: float
    grad_norm: float


class KlTerms(BaseModel):
    generation: float = 0.0
    action: float = 0.0
    trajectory: float = 0.0

    @property
    def total(self) -> float:
        return self.generation + self.action + self.trajectory


class PolicyService:
    """Feature extraction, sampling and closed-form gradients for the policy."""

    def __init__(
        self,
        config: PolicyConfig = PolicyConfig(),
        kinematics: FusionConfig = FusionConfig(),
        grid: GridSpec = GridSpec(),
        codebook: Codebook = DEFAULT_CODEBOOK,
        vocab: TrajectoryVocabulary = DEFAULT_VOCAB,
        horizon: int = HORIZON,
        dt: float = DT_S,
    ):
        self.config = config
        self.kinematics = kinematics
        self.grid = grid
        self.codebook = codebook
        self.vocab = vocab
        self.horizon = horizon
        self.dt = dt
        self.halfwidth = config.corridor_halfwidth_m or default_corridor_halfwidth()

    def init_params(self, seed: int = 0) -> PolicyParams:
        return PolicyParams.initialize(
            self.codebook.size, self.vocab.size, self.horizon, self.config.init_scale, seed
        )

    # ------------------------------
    # Features
    # ------------------------------

    def extract_features(self, scene: Scene, goal: MissionGoal) -> np.ndarray:
        ego = scene.ego
        if len(scene.ego_history) >= 3:
            state = estimate_state(scene.ego_history[-3:], self.dt)
            speed, a_hist = state.velocity.norm(), state.inertial_accel
        else:
            speed, a_hist = ego.velocity.norm(), ego.acceleration
        accel = float(np.dot(a_hist.as_array(), [math.cos(ego.heading), math.sin(ego.heading)]))
        sectors = np.full(SECTORS, DISTANCE_CAP_M)
        if self.config.use_perception and scene.agents:
            offsets = np.array([a.position.as_array() for a in scene.agents]) - ego.position.as_array()
            distances = np.linalg.norm(offsets, axis=1)
            np.minimum.at(sectors, sector_index(offsets, ego.heading, SECTORS), np.minimum(distances, DISTANCE_CAP_M))
        goal_hot = np.zeros(3)
        goal_hot[ACTION_LATERALS.index(goal)] = 1.0
        return np.concatenate([[speed, accel], goal_hot, sectors, [1.0]])

    def prompt_context(self, scene: Scene, goal: MissionGoal) -> PromptContext:
        features = self.extract_features(scene, goal)
        short = predict_from_history(scene.ego_history, goal, self.kinematics, self.dt)
        if self.config.use_generation:
            condition = imagine(scene, short.waypoint, self.dt, self.grid)
        else:
            condition = render_grid(scene, self.grid)
        perception = perception_text(scene) if self.config.use_perception else "perception disabled"
        return PromptContext(scene, goal, features, features / FEATURE_SCALE, short, condition, perception)

    def reflection_features(self, evidence: OccupancyGrid, scene: Scene, short: Vec2) -> Reflection:
        """Conflict evidence along a straight probe ahead of the ego in the
        evidence frame, capped and scaled to [0, 1], plus an any-conflict flag.
        """
        cap = self.config.conflict_cap_m
        if not self.config.use_reasoning:
            return Reflection(np.concatenate([np.ones(self.horizon), [0.0]]), [(k, math.inf) for k in range(self.horizon)])
        ego = scene.ego
        step = max(float(np.linalg.norm(short.as_array() - ego.position.as_array())), self.config.probe_min_step_m)
        direction = np.array([math.cos(ego.heading), math.sin(ego.heading)])
        probe = ego.position.as_array() + np.outer(np.arange(1, self.horizon + 1) * step, direction)
        conflicts = corridor_conflicts(evidence, Trajectory.from_array(probe, self.dt), self.halfwidth, ego.position)
        distances = np.array([d for _, d in conflicts])
        flag = 1.0 if np.isfinite(distances).any() else 0.0
        psi = np.minimum(distances, cap) / cap
        return Reflection(np.concatenate([psi, [flag]]), conflicts)

    def _evidence(self, prompt: PromptContext, visual: Optional[np.ndarray]) -> OccupancyGrid:
        if visual is None:
            return prompt.condition
        return detokenize(TokenSequence(tokens=tuple(int(t) for t in visual)), self.grid, self.codebook)

    def _frame_waypoint(self, prompt: PromptContext) -> Vec2:
        # the current frame is its own imagined frame under zero motion
        return prompt.short.waypoint if self.config.use_generation else prompt.scene.ego.position

    # ------------------------------
    # Heads
    # ------------------------------

    def generation_table(self, params: PolicyParams) -> np.ndarray:
        """Row k: token logits for a cell whose conditioning class is k."""
        return params.w_gen.T + params.b_gen

    def generation_logits(self, params: PolicyParams, imagined: OccupancyGrid) -> np.ndarray:
        return self.generation_table(params)[imagined.as_array()]

    def action_logits(self, params: PolicyParams, x: np.ndarray) -> np.ndarray:
        return params.w_act @ x

    def trajectory_logits(self, params: PolicyParams, z: np.ndarray) -> np.ndarray:
        return params.w_traj @ z

    def trajectory_input(self, x: np.ndarray, reflection: Reflection, action: int) -> np.ndarray:
        return np.concatenate([x, reflection.psi, action_one_hot(action)])

    # ------------------------------
    # Sampling
    # ------------------------------

    def sample_rollout(
        self,
        params: PolicyParams,
        scene: Scene,
        goal: MissionGoal,
        seed: int,
        greedy: bool = False,
        prompt: Optional[PromptContext] = None,
    ) -> Rollout:
        prompt = prompt or self.prompt_context(scene, goal)
        rng = np.random.default_rng(seed)

        visual: Optional[np.ndarray] = None
        logp_gen = 0.0
        if self.config.use_generation:
            logits = self.generation_logits(params, prompt.condition)
            visual = categorical.sample_rows(logits, rng, greedy)
            logp_gen = float(categorical.picked_log_probs(logits, visual).sum())
            tokens = TokenSequence(tokens=tuple(int(t) for t in visual))
        else:
            tokens = tokenize(prompt.condition, self.codebook)
        evidence = self._evidence(prompt, visual)
        reflection = self.reflection_features(evidence, scene, prompt.short.waypoint)

        act_logits = self.action_logits(params, prompt.x)
        action = int(categorical.sample_rows(act_logits, rng, greedy)[0])
        logp_act = float(categorical.picked_log_probs(act_logits, [action])[0])

        z = self.trajectory_input(prompt.x, reflection, action)
        traj_logits = self.trajectory_logits(params, z)
        traj_tokens = categorical.sample_rows(traj_logits, rng, greedy)
        logp_traj = categorical.picked_log_probs(traj_logits, traj_tokens)

        initial = self.vocab.decode(traj_tokens, scene.ego)
        if self.config.use_reasoning:
            answer = self.refine_trajectory(scene, evidence, self._frame_waypoint(prompt), initial)
            think = think_text(reflection.conflicts, self.dt, self.halfwidth)
        else:
            answer, think = initial, "reflection disabled"

        sample = StructuredSample(
            perception=prompt.perception,
            prediction=prompt.short,
            visual=tokens,
            think=think,
            action=action_label(action),
            answer=answer,
        )
        return Rollout(
            sample=sample,
            trajectory_tokens=tuple(int(t) for t in traj_tokens),
            initial_trajectory=initial,
            logp_generation=logp_gen,
            logp_action=logp_act,
            logp_trajectory=tuple(float(v) for v in logp_traj),
            seed=seed,
        )

    def rollout_inputs(self, rollout: Rollout, scene: Scene, goal: MissionGoal, prompt: Optional[PromptContext] = None) -> HeadInputs:
        """Recover head inputs and picks of a stored rollout."""
        prompt = prompt or self.prompt_context(scene, goal)
        visual = rollout.sample.visual.as_array() if self.config.use_generation else None
        reflection = self.reflection_features(self._evidence(prompt, visual), scene, prompt.short.waypoint)
        action = action_index(rollout.sample.action)
        return HeadInputs(
            x=prompt.x,
            z=self.trajectory_input(prompt.x, reflection, action),
            input_classes=prompt.condition.as_array() if visual is not None else None,
            visual=visual,
            action=action,
            trajectory=np.asarray(rollout.trajectory_tokens, dtype=np.int64),
        )

    # ------------------------------
    # Log-likelihoods and gradients
    # ------------------------------

    def _generation_counts(self, inputs: HeadInputs) -> np.ndarray:
        size = self.codebook.size
        flat = inputs.input_classes * size + inputs.visual
        return np.bincount(flat, minlength=size * size).reshape(size, size).astype(float)

    def component_log_probs(self, params: PolicyParams, inputs: HeadInputs) -> Tuple[float, float, np.ndarray]:
        gen = 0.0
        if inputs.visual is not None:
            counts = self._generation_counts(inputs)
            gen = float(np.sum(counts * categorical.log_probs(self.generation_table(params))))
        act = float(categorical.picked_log_probs(self.action_logits(params, inputs.x), [inputs.action])[0])
        traj = categorical.picked_log_probs(self.trajectory_logits(params, inputs.z), inputs.trajectory)
        return gen, act, traj

    def weighted_score(
        self,
        params: PolicyParams,
        inputs: HeadInputs,
        gen_coef: float = 1.0,
        act_coef: float = 1.0,
        traj_coefs: Union[float, np.ndarray] = 1.0,
    ) -> PolicyParams:
        """gen_coef * d logp_gen + act_coef * d logp_act + sum_h traj_coefs[h] * d logp_traj[h]."""
        grad = params.zeros_like()
        w_gen, b_gen = grad.w_gen, grad.b_gen
        if inputs.visual is not None and gen_coef != 0.0:
            counts = self._generation_counts(inputs)
            p = categorical.probs(self.generation_table(params))
            table = gen_coef * (counts - counts.sum(axis=1, keepdims=True) * p)
            w_gen, b_gen = table.T.copy(), table.sum(axis=0)
        g_act = act_coef * categorical.logit_score(self.action_logits(params, inputs.x), [inputs.action])[0]
        coefs = np.broadcast_to(np.asarray(traj_coefs, dtype=float), (len(inputs.trajectory),))
        g_traj = coefs[:, None] * categorical.logit_score(self.trajectory_logits(params, inputs.z), inputs.trajectory)
        return PolicyParams(
            w_gen=w_gen,
            b_gen=b_gen,
            w_act=np.outer(g_act, inputs.x),
            w_traj=g_traj[:, :, None] * inputs.z[None, None, :],
        )

    def logprob_and_grad(
        self, params: PolicyParams, rollout: Rollout, scene: Scene, goal: MissionGoal
    ) -> Tuple[float, PolicyParams]:
        inputs = self.rollout_inputs(rollout, scene, goal)
        gen, act, traj = self.component_log_probs(params, inputs)
        return gen + act + float(traj.sum()), self.weighted_score(params, inputs)

    def kl_and_grad(
        self, params: PolicyParams, ref: PolicyParams, inputs: HeadInputs, gen_weight: float = 1.0
    ) -> Tuple[KlTerms, PolicyParams]:
        """KL(params || ref) over every distribution the sequence visited,
        with its gradient w.r.t. `params`; the generation block is scaled by gen_weight.
        """
        grad = params.zeros_like()
        w_gen, b_gen, kl_gen = grad.w_gen, grad.b_gen, 0.0
        if inputs.visual is not None:
            per_class = np.bincount(inputs.input_classes, minlength=self.codebook.size).astype(float)
            kl_rows, g_rows = categorical.kl_rows_with_grad(self.generation_table(params), self.generation_table(ref))
            kl_gen = float(per_class @ kl_rows)
            table = gen_weight * per_class[:, None] * g_rows
            w_gen, b_gen = table.T.copy(), table.sum(axis=0)
        kl_act, g_act = categorical.kl_rows_with_grad(
            self.action_logits(params, inputs.x), self.action_logits(ref, inputs.x)
        )
        kl_traj, g_traj = categorical.kl_rows_with_grad(
            self.trajectory_logits(params, inputs.z), self.trajectory_logits(ref, inputs.z)
        )
        terms = KlTerms(generation=kl_gen, action=float(kl_act[0]), trajectory=float(kl_traj.sum()))
        return terms, PolicyParams(
            w_gen=w_gen,
            b_gen=b_gen,
            w_act=np.outer(g_act[0], inputs.x),
            w_traj=g_traj[:, :, None] * inputs.z[None, None, :],
        )

    # ------------------------------
    # Reflection
    # ------------------------------

    def refine_trajectory(self, scene: Scene, imagined: OccupancyGrid, short: Vec2, initial: Trajectory) -> Trajectory:
        """Slow down along the planned path so the ego stops a margin short of
        the first obstacle the imagined frame shows in its corridor.
        """
        refined = initial
        for _ in range(_REFINE_PASSES):
            shortened = self._refine_once(scene, imagined, short, refined)
            if shortened is refined:
                break
            refined = shortened
        return refined

    def _refine_once(self, scene: Scene, imagined: OccupancyGrid, short: Vec2, plan: Trajectory) -> Trajectory:
        allowed = stopping_allowance(imagined, scene, short, plan, self.halfwidth, self.config.refine_margin_m)
        if allowed is None:
            return plan
        vertices = np.vstack([scene.ego.position.as_array(), plan.as_array()])
        steps = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
        if steps.sum() <= allowed + 1e-9:
            return plan
        clamped, remaining, cap = [], allowed, math.inf
        for length in steps:
            length = min(length, cap, remaining)
            clamped.append(length)
            remaining -= length
            cap = length
        return Trajectory.from_array(resample_polyline(vertices, np.cumsum(clamped)), plan.step_s)

    # ------------------------------
    # Supervised stages
    # ------------------------------

    def build_example(self, scene: Scene, goal: MissionGoal, target: StructuredSample) -> SupervisedExample:
        """Inputs from the target sample: generation conditioned on the target's short
        prediction, reflection read from the target's visual tokens.
        """
        features = self.extract_features(scene, goal)
        x = features / FEATURE_SCALE
        waypoint = target.prediction.waypoint
        if self.config.use_generation:
            visual = target.visual.as_array()
            evidence = detokenize(target.visual, self.grid, self.codebook)
            conditioning = imagine(scene, waypoint, self.dt, self.grid).as_array()
        else:
            visual, conditioning = None, None
            evidence = render_grid(scene, self.grid)
        reflection = self.reflection_features(evidence, scene, waypoint)
        action = action_index(target.action)
        inputs = HeadInputs(
            x=x,
            z=self.trajectory_input(x, reflection, action),
            input_classes=conditioning,
            visual=visual,
            action=action,
            trajectory=np.asarray(self.vocab.encode(target.answer, scene.ego), dtype=np.int64),
        )
        return SupervisedExample(inputs)

    def _head_weights(self, mode: str) -> Tuple[float, float, float]:
        if mode == "pretrain":
            return 1.0, 0.0, 0.0
        if mode == "sft":
            mix = self.config.sft_mix
            return mix.generation, mix.action, mix.trajectory
        raise ValueError(f"unknown supervised mode {mode!r}")

    def supervised_loss(self, params: PolicyParams, batch: Sequence[SupervisedExample], mode: str = "sft") -> float:
        w_gen, w_act, w_traj = self._head_weights(mode)
        total = 0.0
        for example in batch:
            gen, act, traj = self.component_log_probs(params, example.inputs)
            total -= w_gen * gen / self.grid.num_cells + w_act * act + w_traj * float(traj.mean())
        return total / max(len(batch), 1)

    def supervised_update(
        self, params: PolicyParams, batch: Sequence[SupervisedExample], lr: float, mode: str = "sft"
    ) -> SupervisedResult:
        """One cross-entropy descent step on the heads the mode trains."""
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        w_gen, w_act, w_traj = self._head_weights(mode)
        loss = self.supervised_loss(params, batch, mode)
        score = params.zeros_like()
        for example in batch:
            inputs = example.inputs
            step = self.weighted_score(
                params, inputs, w_gen / self.grid.num_cells, w_act, w_traj / max(len(inputs.trajectory), 1)
            )
            score = score.axpy(1.0 / len(batch), step)
        heads = []
        if w_gen:
            heads += ["w_gen", "b_gen"]
        if w_act:
            heads.append("w_act")
        if w_traj:
            heads.append("w_traj")
        return SupervisedResult(params=params.axpy(lr, score, only=heads), loss=loss, grad_norm=score.norm())

    def generation_accuracy(self, params: PolicyParams, batch: Sequence[SupervisedExample]) -> float:
        table = np.argmax(self.generation_table(params), axis=1)
        batch = [e for e in batch if e.inputs.visual is not None]
        hits = sum(int(np.sum(table[e.inputs.input_classes] == e.inputs.visual)) for e in batch)
        cells = sum(len(e.inputs.visual) for e in batch)
        return hits / cells if cells else 0.0


# ------------------------------
# Checkpoints
# ------------------------------


def save_params(params: PolicyParams, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            handle.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
            for name, value in params.arrays().items():
                handle.write(f"{name} {value.ndim} {' '.join(str(d) for d in value.shape)}\n")
                np.savetxt(handle, value.reshape(1, -1), fmt="%.17g")
    except OSError as exc:
        raise DataIOError(f"cannot write checkpoint {path}: {exc}") from exc
    logger.info("Saved checkpoint %s", path)


def load_params(path: Union[str, Path], like: Optional[PolicyParams] = None) -> PolicyParams:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines or lines[0].split() != [CHECKPOINT_MAGIC, str(CHECKPOINT_VERSION)]:
        raise CheckpointError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
    arrays: Dict[str, np.ndarray] = {}
    body = lines[1:]
    for i in range(0, len(body) - 1, 2):
        header, values = body[i].split(), body[i + 1]
        try:
            name, ndim = header[0], int(header[1])
            shape = tuple(int(d) for d in header[2:2 + ndim])
            arrays[name] = np.array(values.split(), dtype=float).reshape(shape)
        except (IndexError, ValueError) as exc:
            raise CheckpointError(f"{path}: line {i + 2}: bad array record ({exc})") from exc
    if sorted(arrays) != sorted(PolicyParams.names()):
        raise CheckpointError(f"{path}: expected arrays {', '.join(PolicyParams.names())}")
    params = PolicyParams(**arrays)
    if like is not None and params.shapes() != like.shapes():
        raise CheckpointError(f"{path}: shape mismatch {params.shapes()} != {like.shapes()}")
    return params
