from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

REWARD_COMPONENTS = ("r_fmt", "r_pred", "r_vis", "r_act", "r_traj")


class RewardWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    fmt: float = Field(1.0, ge=0.0)
    pred: float = Field(1.0, ge=0.0)
    vis: float = Field(0.5, ge=0.0)
    act: float = Field(1.0, ge=0.0)
    traj: float = Field(2.0, ge=0.0)

    @model_validator(mode="after")
    def _not_all_zero(self) -> "RewardWeights":
        if not any(self.as_tuple()):
            raise ValueError("at least one reward weight must be positive")
        return self

    def as_tuple(self) -> tuple:
        return (self.fmt, self.pred, self.vis, self.act, self.traj)


class RewardBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    r_fmt: float = Field(..., ge=0.0, le=1.0)
    r_pred: float = Field(..., ge=0.0, le=1.0)
    r_vis: float = Field(..., ge=0.0, le=1.0)
    r_act: float = Field(..., ge=0.0, le=1.0)
    r_traj: float = Field(..., ge=0.0, le=1.0)
    total: float = 0.0

    def components(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in REWARD_COMPONENTS}


class RewardConfig(BaseModel):
    weights: RewardWeights = RewardWeights()
    sigma_pred_m: float = Field(0.5, gt=0.0)
    sigma_traj_m: float = Field(1.0, gt=0.0)
    sigma_jerk: float = Field(2.0, gt=0.0)


class SftMix(BaseModel):
    """Per-head weights of the supervised task mix."""

    generation: float = Field(1.0, ge=0.0)
    action: float = Field(1.0, ge=0.0)
    trajectory: float = Field(1.0, ge=0.0)


class PolicyConfig(BaseModel):
    use_perception: bool = True
    use_generation: bool = True
    use_reasoning: bool = True
    init_scale: float = Field(0.01, ge=0.0)
    refine_margin_m: float = Field(0.5, ge=0.0)
    # None: half the ego width plus 0.2 m
    corridor_halfwidth_m: Optional[float] = Field(None, gt=0.0)
    probe_min_step_m: float = Field(1.0, gt=0.0)
    conflict_cap_m: float = Field(8.0, gt=0.0)
    sft_mix: SftMix = SftMix()


class GrpoConfig(BaseModel):
    group_size: int = Field(8, ge=2)
    clip_eps: float = Field(0.2, gt=0.0, lt=1.0)
    kl_coef: float = Field(1e-2, ge=0.0)
    learning_rate: float = Field(0.05, gt=0.0)
    steps: int = Field(300, ge=0)
    advantage_eps: float = Field(1e-8, gt=0.0)
    inner_epochs: int = Field(1, ge=1)
    prompts_per_step: int = Field(4, ge=1)
    probe_size: int = Field(16, ge=0)
    probe_every: int = Field(10, ge=1)
    workers: int = Field(0, ge=0)
    seed: int = 0


class AdvantageSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    values: List[float]
    mean: float
    std: float


class StepStats(BaseModel):
    step: int
    prompt_means: List[float]
    prompt_stds: List[float]
    mean_reward: float
    component_means: Dict[str, float]
    kl: float
    grad_norm: float


class StageConfig(BaseModel):
    pretrain_epochs: int = Field(20, ge=0)
    pretrain_lr: float = Field(1.0, gt=0.0)
    sft_epochs: int = Field(40, ge=0)
    sft_lr: float = Field(0.1, gt=0.0)
    batch_size: int = Field(32, ge=1)
