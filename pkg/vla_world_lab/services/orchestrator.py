"""Stage pipeline behind the command-line surface: data, three training
stages, evaluation, plot-data reports and ablations.
"""
import json
import logging
import math
import re
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from vla_world_lab.core.errors import (
    ConfigError,
    DataIOError,
    DatasetContentError,
    DatasetFormatError,
    NumericalError,
    PreconditionError,
    TokenSequenceError,
)
from vla_world_lab.schemas.dataset import DatasetRecord, Split
from vla_world_lab.schemas.run import STAGES, RunConfig
from vla_world_lab.schemas.sample import StructuredSample
from vla_world_lab.services.data_service import (
    dataset_stats,
    generate_scenarios,
    load_dataset,
    make_gt_sample,
    save_dataset,
    split_records,
)
from vla_world_lab.services.grpo_service import GrpoTrainer, write_training_log
from vla_world_lab.services.metrics_service import EvaluationReport, MetricsService
from vla_world_lab.services.policy_service import PolicyParams, PolicyService, load_params
from vla_world_lab.services.reward_service import RewardEngine

logger = logging.getLogger(__name__)

SUPERVISED_LOG_COLUMNS = ("epoch", "train_loss", "val_loss", "val_gen_accuracy")
REPORT_COLUMNS = ("section", "metric", "horizon", "value")
FLOAT_FORMAT = "%.10g"

SKIP_TOGGLES = {"skip-pretrain": "pretrain", "skip-sft": "sft", "skip-rl": "rl"}
DROP_TOGGLES = {
    "drop-perception": "use_perception",
    "drop-generation": "use_generation",
    "drop-reasoning": "use_reasoning",
}
ZERO_TOGGLES = {"zero-pred": "pred", "zero-vis": "vis", "zero-act": "act", "zero-traj": "traj"}
TOGGLES = tuple(SKIP_TOGGLES) + tuple(DROP_TOGGLES) + tuple(ZERO_TOGGLES) + ("no-mixed",)


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc}") from exc


def apply_toggles(config: RunConfig, toggles: Iterable[str]) -> Tuple[RunConfig, Tuple[str, ...]]:
    """Config and stage list of an ablation variant."""
    toggles = list(toggles)
    unknown = [t for t in toggles if t not in TOGGLES]
    if unknown:
        raise ConfigError(f"unknown toggle(s) {', '.join(unknown)}; valid: {', '.join(TOGGLES)}", "toggle")
    policy = config.policy.model_copy(update={v: False for k, v in DROP_TOGGLES.items() if k in toggles})
    if "no-mixed" in toggles:
        policy = policy.model_copy(
            update={"sft_mix": policy.sft_mix.model_copy(update={"generation": 0.0, "action": 0.0})}
        )
    weights = config.rewards.weights.model_dump()
    weights.update({v: 0.0 for k, v in ZERO_TOGGLES.items() if k in toggles})
    try:
        rewards = config.rewards.model_copy(update={"weights": type(config.rewards.weights)(**weights)})
    except ValueError as exc:
        raise ConfigError("toggles zero every reward weight", "toggle") from exc
    stages = tuple(s for s in STAGES if s not in {SKIP_TOGGLES[t] for t in toggles if t in SKIP_TOGGLES})
    return config.model_copy(update={"policy": policy, "rewards": rewards}), stages


# ------------------------------
# Evaluation report layout
# ------------------------------


def report_frame(report: EvaluationReport, step_s: float = 0.5) -> pd.DataFrame:
    """Long format: one (section, metric, horizon, value) row per number."""
    rows: List[Tuple[str, str, str, float]] = []
    for k, value in enumerate(report.l2_per_step):
        rows.append(("l2", "per_step", f"{(k + 1) * step_s:g}s", value))
    rows += [("l2", "stp3", h, v) for h, v in report.l2_stp3.items()]
    rows += [("l2", "uniad", h, v) for h, v in report.l2_uniad.items()]
    rows += [("l2", "stp3_avg", "", report.l2_stp3_avg), ("l2", "uniad_avg", "", report.l2_uniad_avg)]
    rates = report.collisions
    for k, value in enumerate(rates.per_step):
        rows.append(("collision", "per_step", f"{(k + 1) * step_s:g}s", value))
    rows += [("collision", "stp3", h, v) for h, v in rates.stp3_at.items()]
    rows += [("collision", "uniad", h, v) for h, v in rates.uniad_at.items()]
    rows += [("collision", "stp3_avg", "", rates.stp3_avg), ("collision", "uniad_avg", "", rates.uniad_avg)]
    rows.append(("collision", "count", "", float(report.collision_count)))
    rows += [("action_f1", name, "", v) for name, v in report.action_f1.items()]
    rows.append(("generation", "frechet", "", math.nan if report.frechet is None else report.frechet))
    rows += [("reward", name, "", v) for name, v in report.rewards.items()]
    return pd.DataFrame(rows, columns=list(REPORT_COLUMNS))


# ------------------------------
# Plot-data reports
# ------------------------------


def _read_log(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise DataIOError(f"cannot read log {path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DatasetFormatError(str(path), 1, "missing header") from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise DatasetFormatError(str(path), int(match.group(1)) if match else 1, str(exc)) from exc
    if "step" not in frame.columns and "epoch" not in frame.columns:
        raise DatasetFormatError(str(path), 1, "log needs a step or epoch column")
    for column in frame.columns:
        values = pd.to_numeric(frame[column], errors="coerce")
        bad = values.isna() & frame[column].notna()
        if bad.any():
            # header is line 1
            raise DatasetFormatError(str(path), int(np.flatnonzero(bad.to_numpy())[0]) + 2, f"non-numeric {column}")
        frame[column] = values
    return frame.rename(columns={"epoch": "step"})


def write_plot_data(logs: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> List[Path]:
    """One `<metric>.csv` per logged metric with per-run values and the
    across-run mean and population std at each step.
    """
    paths = [Path(p) for p in logs]
    if not paths:
        raise ConfigError("report needs at least one log file", "logs")
    frames = [_read_log(p) for p in paths]
    names = [p.stem for p in paths]
    if len(set(names)) < len(names):
        names = [str(p) for p in paths]
    metrics = [c for c in frames[0].columns if c != "step"]
    for frame in frames[1:]:
        metrics += [c for c in frame.columns if c != "step" and c not in metrics]

    written = []
    for metric in metrics:
        parts = [
            pd.DataFrame({"step": f["step"], "run": name, "value": f[metric]})
            for f, name in zip(frames, names)
            if metric in f.columns
        ]
        long = pd.concat(parts, ignore_index=True).dropna(subset=["value"])
        target = Path(out_dir) / f"{metric}.csv"
        written.append(target)
        if long.empty:
            _write_csv(pd.DataFrame(columns=["step", "run", "value", "mean", "std"]), target)
            continue
        long["step"] = long["step"].astype("int64")
        stats = long.groupby("step")["value"].agg(mean="mean", std=lambda v: float(np.std(v)))
        long = long.join(stats, on="step").sort_values(["step", "run"], kind="mergesort")
        _write_csv(long[["step", "run", "value", "mean", "std"]], target)
    return written


@contextmanager
def record_preconditions(action: str) -> Iterator[None]:
    """Report precondition failures raised deep inside a stage as bad input records."""
    try:
        yield
    except (PreconditionError, TokenSequenceError) as exc:
        logger.error("%s hit a record precondition: %s", action, exc)
        raise DatasetContentError(f"{action}: {exc}") from exc


@dataclass
class StageResult:
    params: PolicyParams
    log: List[Dict[str, float]] = field(default_factory=list)


class PipelineOrchestrator:
    """Wires the policy, reward, GRPO and metrics services for one run config."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.policy = PolicyService(config.policy, config.kinematics, config.grid)
        self.rewards = RewardEngine(config.rewards, required_len=config.grid.num_cells, codebook=self.policy.codebook)
        self.metrics = MetricsService(config.rewards, config.metrics.feature_dim, config.metrics.projection_seed)

    # ------------------------------
    # Data
    # ------------------------------

    def generate_data(self) -> Dict[Split, List[DatasetRecord]]:
        records = generate_scenarios(self.config.scenario, self.config.grid)
        paths = self.config.paths
        out = {split: split_records(records, split) for split in Split}
        for split, subset in out.items():
            save_dataset(subset, paths.dataset(split))
        try:
            paths.stats().write_text(json.dumps(dataset_stats(records), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise DataIOError(f"cannot write {paths.stats()}: {exc}") from exc
        logger.info("Wrote %d train / %d val records to %s", len(out[Split.TRAIN]), len(out[Split.VAL]), paths.data_dir)
        return out

    def load_split(self, split: Split) -> List[DatasetRecord]:
        path = self.config.paths.dataset(split)
        records = load_dataset(path)
        for lineno, record in enumerate(records, start=2):
            if len(record.gt_trajectory) != self.policy.horizon:
                raise DatasetFormatError(
                    str(path), lineno, f"gt_trajectory has {len(record.gt_trajectory)} waypoints, expected {self.policy.horizon}"
                )
        return records

    # ------------------------------
    # Checkpoints
    # ------------------------------

    def initial_params(self) -> PolicyParams:
        return self.policy.init_params(self.config.seed)

    def load_checkpoint(self, path: Union[str, Path]) -> PolicyParams:
        return load_params(path, like=self.initial_params())

    # ------------------------------
    # Supervised stages
    # ------------------------------

    def supervised_stage(
        self,
        params: PolicyParams,
        train: Sequence[DatasetRecord],
        val: Sequence[DatasetRecord],
        mode: str,
    ) -> StageResult:
        stages = self.config.stages
        epochs, lr = (stages.pretrain_epochs, stages.pretrain_lr) if mode == "pretrain" else (stages.sft_epochs, stages.sft_lr)
        if mode == "pretrain" and not self.config.policy.use_generation:
            logger.info("Generation disabled; pretraining is a no-op")
            return StageResult(params)
        policy = self.policy
        train_examples = [policy.build_example(r.scene, r.goal, make_gt_sample(r, policy.halfwidth)) for r in train]
        val_examples = [policy.build_example(r.scene, r.goal, make_gt_sample(r, policy.halfwidth)) for r in val]
        rng = np.random.default_rng(np.random.SeedSequence([self.config.seed, STAGES.index(mode)]))
        log = []
        for epoch in range(1, epochs + 1):
            losses = []
            order = rng.permutation(len(train_examples))
            for start in range(0, len(order), stages.batch_size):
                batch = [train_examples[i] for i in order[start:start + stages.batch_size]]
                result = policy.supervised_update(params, batch, lr, mode)
                if not (result.params.is_finite() and math.isfinite(result.loss)):
                    logger.error("Non-finite %s update at epoch %d", mode, epoch)
                    raise NumericalError(f"non-finite {mode} update at epoch {epoch}")
                params = result.params
                losses.append(result.loss)
            row = {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)) if losses else math.nan,
                "val_loss": policy.supervised_loss(params, val_examples, mode) if val_examples else math.nan,
                "val_gen_accuracy": policy.generation_accuracy(params, val_examples) if val_examples else math.nan,
            }
            log.append(row)
            logger.info(
                "%s epoch %d/%d loss=%.4f val_loss=%.4f gen_acc=%.4f",
                mode, epoch, epochs, row["train_loss"], row["val_loss"], row["val_gen_accuracy"],
            )
        return StageResult(params, log)

    # ------------------------------
    # Reinforcement stage
    # ------------------------------

    def rl_stage(
        self, params: PolicyParams, train: Sequence[DatasetRecord], probe: Sequence[DatasetRecord] = ()
    ) -> StageResult:
        """GRPO with the incoming policy frozen as the KL reference."""
        trainer = GrpoTrainer(self.policy, self.config.grpo, self.rewards.score_sample)
        trained, rows = trainer.train(params, params, list(train), probe)
        return StageResult(trained, rows)

    def run_stage(self, stage: str, params: PolicyParams, train, val) -> StageResult:
        with record_preconditions(stage):
            if stage == "rl":
                return self.rl_stage(params, train, val)
            return self.supervised_stage(params, train, val, stage)

    def run_pipeline(
        self, train: Sequence[DatasetRecord], val: Sequence[DatasetRecord], stages: Sequence[str] = STAGES
    ) -> PolicyParams:
        params = self.initial_params()
        for stage in STAGES:
            if stage in stages:
                params = self.run_stage(stage, params, train, val).params
        return params

    @staticmethod
    def write_stage_log(stage: str, rows: Sequence[Dict[str, float]], path: Union[str, Path]) -> None:
        if stage == "rl":
            write_training_log(rows, path)
        else:
            _write_csv(pd.DataFrame(list(rows), columns=list(SUPERVISED_LOG_COLUMNS)), Path(path))

    # ------------------------------
    # Evaluation
    # ------------------------------

    def predict(self, params: PolicyParams, records: Sequence[DatasetRecord]) -> List[StructuredSample]:
        """Greedy samples, one per record."""
        return [self.policy.sample_rollout(params, r.scene, r.goal, seed=0, greedy=True).sample for r in records]

    def evaluate(self, params: PolicyParams, records: Sequence[DatasetRecord]) -> EvaluationReport:
        with record_preconditions("eval"):
            return self.metrics.evaluate_samples(records, self.predict(params, records))

    def write_report(self, report: EvaluationReport, path: Union[str, Path]) -> None:
        _write_csv(report_frame(report, self.policy.dt), Path(path))

    # ------------------------------
    # Ablation
    # ------------------------------

    def ablate(
        self, toggles: Iterable[str], train: Sequence[DatasetRecord], val: Sequence[DatasetRecord]
    ) -> pd.DataFrame:
        """Variant report beside the untoggled baseline with their difference."""
        toggles = list(toggles)
        variant_config, stages = apply_toggles(self.config, toggles)
        logger.info("Ablation baseline run")
        baseline = report_frame(self.evaluate(self.run_pipeline(train, val), val), self.policy.dt)
        if toggles:
            logger.info("Ablation variant run: %s (stages %s)", ", ".join(toggles), ", ".join(stages) or "none")
            variant_runner = PipelineOrchestrator(variant_config)
            variant = report_frame(variant_runner.evaluate(variant_runner.run_pipeline(train, val, stages), val), self.policy.dt)
        else:
            variant = baseline
        out = variant.copy()
        out["baseline"] = baseline["value"].to_numpy()
        out["delta"] = out["value"] - out["baseline"]
        return out

    def write_ablation(self, frame: pd.DataFrame, path: Union[str, Path]) -> None:
        _write_csv(frame, Path(path))
