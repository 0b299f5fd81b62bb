import json

import numpy as np
import pandas as pd
import pytest
import yaml

from vla_world_lab.core.errors import ConfigError, DataIOError, DatasetContentError, DatasetFormatError
from vla_world_lab.main import main
from vla_world_lab.schemas.run import RunConfig, load_run_config
from vla_world_lab.services.data_service import load_dataset, make_gt_sample, save_dataset
from vla_world_lab.services.grpo_service import LOG_COLUMNS
from vla_world_lab.services.metrics_service import MetricsService
from vla_world_lab.services.orchestrator import (
    PipelineOrchestrator,
    REPORT_COLUMNS,
    SUPERVISED_LOG_COLUMNS,
    TOGGLES,
    apply_toggles,
    report_frame,
    write_plot_data,
)


def tiny_config(root, **overrides) -> dict:
    config = {
        "seed": 1,
        "paths": {
            "data_dir": str(root / "data"),
            "checkpoint_dir": str(root / "checkpoints"),
            "log_dir": str(root / "logs"),
            "report_dir": str(root / "reports"),
        },
        "grid": {"cells_per_side": 8, "extent_m": 32.0},
        "scenario": {"n_scenes": 6, "val_fraction": 0.5, "agents_max": 2},
        "stages": {"pretrain_epochs": 1, "sft_epochs": 1, "batch_size": 4},
        "grpo": {"steps": 2, "group_size": 2, "prompts_per_step": 2, "probe_size": 2, "probe_every": 1},
    }
    for section, values in overrides.items():
        if isinstance(values, dict):
            config.setdefault(section, {}).update(values)
        else:
            config[section] = values
    return config


def truncated(record):
    points = record.gt_trajectory.points[:4]
    return record.model_copy(update={"gt_trajectory": record.gt_trajectory.model_copy(update={"points": points})})


def write_config(root, **overrides):
    path = root / "run.yaml"
    path.write_text(yaml.safe_dump(tiny_config(root, **overrides)))
    return str(path)


@pytest.fixture
def workspace(tmp_path):
    """Config plus generated datasets under a temporary directory."""
    config = write_config(tmp_path)
    assert main(["gen-data", "--config", config]) == 0
    return tmp_path, config


class TestGenData:
    """Test the gen-data command"""

    def test_writes_splits_and_stats(self, capsys, workspace):
        root, _ = workspace
        assert "Generated 3 train / 3 val scenes" in capsys.readouterr().out
        stats = json.loads((root / "data" / "stats.json").read_text())
        assert stats["records"] == 6
        assert stats["splits"] == {"train": 3, "val": 3}
        assert (root / "data" / "train.jsonl").exists()

    def test_seed_override(self, workspace, tmp_path_factory):
        root, config = workspace
        other = tmp_path_factory.mktemp("other")
        assert main(["gen-data", "--config", config, "--seed", "2", "--dataset", str(other)]) == 0
        assert (other / "train.jsonl").read_text() != (root / "data" / "train.jsonl").read_text()

    def test_invalid_proportions(self, tmp_path):
        config = write_config(tmp_path, scenario={"goal_mix": {"forward": 0.9, "left": 0.3}})
        assert main(["gen-data", "--config", config]) == 2

    def test_unknown_key(self, tmp_path):
        config = write_config(tmp_path, colour="red")
        assert main(["gen-data", "--config", config]) == 2


class TestTrainingCommands:
    """Test the pretrain, sft, rl and eval commands end to end"""

    def test_stage_chain(self, workspace):
        root, config = workspace
        for stage in ("pretrain", "sft", "rl"):
            assert main(["--log-level", "WARNING", stage, "--config", config]) == 0
            assert (root / "checkpoints" / f"{stage}.ckpt").exists()

        sft_log = pd.read_csv(root / "logs" / "sft.csv")
        assert list(sft_log.columns) == list(SUPERVISED_LOG_COLUMNS)
        assert len(sft_log) == 1
        rl_log = pd.read_csv(root / "logs" / "rl.csv")
        assert list(rl_log.columns) == list(LOG_COLUMNS)
        assert rl_log["step"].tolist() == [1, 2]

        first, second = root / "eval-a.csv", root / "eval-b.csv"
        assert main(["eval", "--config", config, "--out", str(first)]) == 0
        assert main(["eval", "--config", config, "--out", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        frame = pd.read_csv(first, keep_default_na=False)
        assert list(frame.columns) == list(REPORT_COLUMNS)

    def test_rl_needs_checkpoint(self, workspace):
        _, config = workspace
        assert main(["rl", "--config", config]) == 3
        assert main(["rl", "--config", config, "--from-scratch"]) == 0

    def test_rl_log_repeats(self, workspace):
        root, config = workspace
        logs = [root / "rl-a.csv", root / "rl-b.csv"]
        for log in logs:
            assert main(["rl", "--config", config, "--from-scratch", "--log", str(log), "--out", str(root / "rl.ckpt")]) == 0
        assert logs[0].read_bytes() == logs[1].read_bytes()

    def test_zero_epoch_sft_keeps_checkpoint(self, workspace):
        root, _ = workspace
        config = write_config(root, stages={"sft_epochs": 0})
        assert main(["pretrain", "--config", config]) == 0
        source, target = root / "checkpoints" / "pretrain.ckpt", root / "sft-copy.ckpt"
        assert main(["sft", "--config", config, "--in", str(source), "--out", str(target)]) == 0
        assert target.read_bytes() == source.read_bytes()
        assert pd.read_csv(root / "logs" / "sft.csv").empty

    def test_missing_dataset(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["pretrain", "--config", config]) == 3

    def test_missing_checkpoint_for_eval(self, workspace):
        root, config = workspace
        assert main(["eval", "--config", config, "--in", str(root / "nope.ckpt")]) == 3

    def test_short_horizon_dataset(self, capsys, workspace):
        root, config = workspace
        path = root / "data" / "val.jsonl"
        save_dataset([truncated(r) for r in load_dataset(path)], path)
        assert main(["eval", "--config", config]) == 3
        assert "line 2: gt_trajectory has 4 waypoints, expected 6" in capsys.readouterr().err

    def test_record_preconditions_map_to_input_errors(self, workspace):
        root, config = workspace
        runner = PipelineOrchestrator(load_run_config(config))
        records = [truncated(r) for r in load_dataset(root / "data" / "val.jsonl")]
        with pytest.raises(DatasetContentError, match="trajectory lengths differ") as excinfo:
            runner.evaluate(runner.initial_params(), records)
        assert excinfo.value.exit_code == 3


class TestAblateCommand:
    """Test the ablate command"""

    def test_unknown_toggle(self, capsys, workspace):
        _, config = workspace
        assert main(["ablate", "--config", config, "--toggle", "drop-everything"]) == 2
        assert "drop-everything" in capsys.readouterr().err

    def test_variant_report(self, workspace):
        root, config = workspace
        out = root / "ablate.csv"
        assert main(["ablate", "--config", config, "--toggle", "skip-rl", "--toggle", "drop-reasoning", "--out", str(out)]) == 0
        frame = pd.read_csv(out)
        assert list(frame.columns) == list(REPORT_COLUMNS) + ["baseline", "delta"]
        numeric = frame[frame["metric"] == "stp3_avg"]
        assert np.allclose(numeric["delta"], numeric["value"] - numeric["baseline"])


class TestToggles:
    """Test ablation toggles on a run config"""

    def test_every_toggle_is_accepted(self):
        for toggle in TOGGLES:
            apply_toggles(RunConfig(), [toggle])

    def test_combined(self):
        config, stages = apply_toggles(RunConfig(), ["skip-pretrain", "drop-generation", "zero-traj", "no-mixed"])
        assert stages == ("sft", "rl")
        assert config.policy.use_generation is False
        assert config.policy.use_reasoning is True
        assert config.rewards.weights.traj == 0.0
        assert config.rewards.weights.fmt == 1.0
        assert config.policy.sft_mix.generation == 0.0
        assert config.policy.sft_mix.trajectory == 1.0

    def test_unknown(self):
        with pytest.raises(ConfigError) as excinfo:
            apply_toggles(RunConfig(), ["skip-eval"])
        assert excinfo.value.field == "toggle"


class TestReports:
    """Test the evaluation table and plot-data files"""

    def test_report_frame(self, small_dataset):
        report = MetricsService().evaluate_samples(small_dataset, [make_gt_sample(r) for r in small_dataset])
        frame = report_frame(report)
        assert list(frame.columns) == list(REPORT_COLUMNS)
        l2 = frame[(frame["section"] == "l2") & (frame["metric"] == "per_step")]
        assert l2["horizon"].tolist() == ["0.5s", "1s", "1.5s", "2s", "2.5s", "3s"]
        count = frame[(frame["section"] == "collision") & (frame["metric"] == "count")]
        assert count["value"].tolist() == [0.0]
        assert set(frame[frame["section"] == "action_f1"]["metric"]) >= {"forward", "stop"}

    def test_plot_data_across_runs(self, tmp_path):
        (tmp_path / "a.csv").write_text("step,loss\n1,1.0\n2,3.0\n")
        (tmp_path / "b.csv").write_text("step,loss\n1,3.0\n2,5.0\n")
        written = write_plot_data([tmp_path / "a.csv", tmp_path / "b.csv"], tmp_path / "plots")
        assert [p.name for p in written] == ["loss.csv"]
        frame = pd.read_csv(written[0])
        assert list(frame.columns) == ["step", "run", "value", "mean", "std"]
        assert frame["run"].tolist() == ["a", "b", "a", "b"]
        assert frame["mean"].tolist() == [2.0, 2.0, 4.0, 4.0]
        assert frame["std"].tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_epoch_logs_and_gaps(self, tmp_path):
        (tmp_path / "sft.csv").write_text("epoch,val_loss,probe\n1,0.5,\n2,0.25,7\n")
        written = write_plot_data([tmp_path / "sft.csv"], tmp_path / "plots")
        probe = pd.read_csv(tmp_path / "plots" / "probe.csv")
        assert probe["step"].tolist() == [2]
        assert probe["std"].tolist() == [0.0]
        assert len(written) == 2

    def test_non_numeric_cell(self, tmp_path):
        (tmp_path / "bad.csv").write_text("step,loss\n1,1.0\n2,abc\n")
        with pytest.raises(DatasetFormatError) as excinfo:
            write_plot_data([tmp_path / "bad.csv"], tmp_path / "plots")
        assert excinfo.value.line == 3

    def test_missing_step_column(self, tmp_path):
        (tmp_path / "bad.csv").write_text("loss\n1.0\n")
        with pytest.raises(DatasetFormatError, match="step or epoch"):
            write_plot_data([tmp_path / "bad.csv"], tmp_path / "plots")

    def test_missing_log(self, tmp_path):
        with pytest.raises(DataIOError):
            write_plot_data([tmp_path / "absent.csv"], tmp_path / "plots")

    def test_report_command(self, tmp_path, capsys):
        (tmp_path / "rl.csv").write_text("step,mean_reward\n1,0.5\n")
        assert main(["report", str(tmp_path / "rl.csv"), "--out", str(tmp_path / "plots")]) == 0
        assert "Wrote 1 plot-data files" in capsys.readouterr().out
        assert main(["report", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "plots")]) == 3
