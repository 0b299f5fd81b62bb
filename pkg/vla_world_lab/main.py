"""Command-line entry point: `vla-world-lab <command> --config PATH ...`."""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from vla_world_lab.core.config import settings
from vla_world_lab.core.errors import DataIOError, VlaWorldError
from vla_world_lab.core.logging import configure_logging
from vla_world_lab.schemas.dataset import Split
from vla_world_lab.schemas.run import RunConfig, load_run_config
from vla_world_lab.services.orchestrator import TOGGLES, PipelineOrchestrator, write_plot_data
from vla_world_lab.services.policy_service import PolicyParams, save_params

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vla-world-lab", description=__doc__)
    parser.add_argument("--log-level", default=None, help="overrides VLA_WORLD_LOG")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, default=None, help="YAML run config")
        cmd.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        cmd.add_argument("--dataset", type=Path, default=None, help="dataset directory (overrides paths.data_dir)")
        return cmd

    common("gen-data", "generate the synthetic train/val datasets")
    for stage, help_text in (
        ("pretrain", "train the generation head on ground-truth frames"),
        ("sft", "supervised fine-tune on ground-truth samples"),
        ("rl", "GRPO reinforcement learning"),
    ):
        cmd = common(stage, help_text)
        cmd.add_argument("--in", dest="checkpoint_in", type=Path, default=None)
        cmd.add_argument("--out", dest="checkpoint_out", type=Path, default=None)
        cmd.add_argument("--log", dest="log_path", type=Path, default=None, help="training log CSV")
        if stage == "rl":
            cmd.add_argument("--from-scratch", action="store_true", help="allow running without an SFT checkpoint")

    cmd = common("eval", "evaluate a checkpoint on the held-out split")
    cmd.add_argument("--in", dest="checkpoint_in", type=Path, default=None)
    cmd.add_argument("--out", dest="report_out", type=Path, default=None)

    cmd = sub.add_parser("report", help="turn training logs into per-metric plot-data CSVs")
    cmd.add_argument("logs", type=Path, nargs="+")
    cmd.add_argument("--out", dest="out_dir", type=Path, default=Path("reports/plot-data"))

    cmd = common("ablate", "run a pipeline variant and compare it with the baseline")
    cmd.add_argument("--toggle", dest="toggles", action="append", default=[], help=f"one of: {', '.join(TOGGLES)}")
    cmd.add_argument("--out", dest="report_out", type=Path, default=None)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    path = args.config
    if path is None and Path(settings.DEFAULT_CONFIG).exists():
        path = Path(settings.DEFAULT_CONFIG)
    config = load_run_config(path, args.seed)
    if args.dataset is not None:
        config = config.model_copy(update={"paths": config.paths.model_copy(update={"data_dir": args.dataset})})
    return config


def _stage_input(runner: PipelineOrchestrator, args: argparse.Namespace) -> PolicyParams:
    paths = runner.config.paths
    if args.checkpoint_in is not None:
        return runner.load_checkpoint(args.checkpoint_in)
    previous = {"pretrain": None, "sft": "pretrain", "rl": "sft"}[args.command]
    if previous and paths.checkpoint(previous).exists():
        return runner.load_checkpoint(paths.checkpoint(previous))
    if args.command == "rl" and not args.from_scratch:
        raise DataIOError(f"rl needs an SFT checkpoint ({paths.checkpoint('sft')} or --in) unless --from-scratch")
    if previous:
        logger.warning("No %s checkpoint found; starting from initial parameters", previous)
    return runner.initial_params()


def cmd_gen_data(args: argparse.Namespace) -> int:
    runner = PipelineOrchestrator(resolve_config(args))
    splits = runner.generate_data()
    print(f"✅ Generated {len(splits[Split.TRAIN])} train / {len(splits[Split.VAL])} val scenes in {runner.config.paths.data_dir}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    runner = PipelineOrchestrator(resolve_config(args))
    paths = runner.config.paths
    params = _stage_input(runner, args)
    train, val = runner.load_split(Split.TRAIN), runner.load_split(Split.VAL)
    result = runner.run_stage(args.command, params, train, val)
    out = args.checkpoint_out or paths.checkpoint(args.command)
    log_path = args.log_path or paths.log(args.command)
    save_params(result.params, out)
    runner.write_stage_log(args.command, result.log, log_path)
    print(f"✅ {args.command} finished: checkpoint {out}, log {log_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    runner = PipelineOrchestrator(resolve_config(args))
    paths = runner.config.paths
    checkpoint = args.checkpoint_in or paths.checkpoint("rl")
    records = runner.load_split(runner.config.metrics.eval_split)
    report = runner.evaluate(runner.load_checkpoint(checkpoint), records)
    out = args.report_out or paths.report_dir / "eval.csv"
    runner.write_report(report, out)
    print(f"📊 Evaluated {checkpoint} on {len(records)} scenes: ST-P3 avg L2 {report.l2_stp3_avg:.3f} m, report {out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    written = write_plot_data(args.logs, args.out_dir)
    print(f"📈 Wrote {len(written)} plot-data files to {args.out_dir}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    runner = PipelineOrchestrator(resolve_config(args))
    train = runner.load_split(Split.TRAIN)
    val = runner.load_split(runner.config.metrics.eval_split)
    frame = runner.ablate(args.toggles, train, val)
    name = "-".join(args.toggles) or "baseline"
    out = args.report_out or runner.config.paths.report_dir / f"ablate-{name}.csv"
    runner.write_ablation(frame, out)
    print(f"🧪 Ablation {name}: report {out}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_train,
    "sft": cmd_train,
    "rl": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except VlaWorldError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"❌ {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
