import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from tests.conftest import make_scene, vehicle
from vla_world_lab.core.errors import DataIOError, DatasetFormatError, GenerationError
from vla_world_lab.schemas.dataset import ScenarioConfig, Split
from vla_world_lab.schemas.scene import ActionLabel, Lateral, Longitudinal, MissionGoal
from vla_world_lab.services import data_service
from vla_world_lab.services.data_service import (
    accel_profiles,
    dataset_stats,
    expert_plan,
    generate_scenarios,
    load_dataset,
    longitudinal_label,
    make_gt_sample,
    save_dataset,
    split_records,
)
from vla_world_lab.utils.grammar import check_format, serialize
from vla_world_lab.utils.narration import perception_text, think_text
from vla_world_lab.utils.trajectory_vocab import CURVATURE_OF, DEFAULT_VOCAB, STRAIGHT
from vla_world_lab.utils.world_engine import EGO_FOOTPRINT, collisions_along, imagine


class TestScenarioGeneration:
    """Test seeded scenario generation"""

    def test_deterministic(self, scenario_config, small_dataset):
        assert generate_scenarios(scenario_config) == small_dataset

    def test_seed_changes_scenes(self, small_dataset):
        other = generate_scenarios(ScenarioConfig(n_scenes=10, seed=4))
        assert other != small_dataset

    def test_split_sizes(self, small_dataset):
        assert len(small_dataset) == 10
        assert [r.split for r in small_dataset] == [Split.TRAIN] * 8 + [Split.VAL] * 2
        assert len(split_records(small_dataset, Split.VAL)) == 2

    def test_ground_truth_is_collision_free(self, small_dataset):
        for record in small_dataset:
            assert not any(collisions_along(record.scene, record.gt_trajectory))

    def test_short_prediction_is_first_waypoint(self, small_dataset):
        for record in small_dataset:
            first = record.gt_trajectory.points[0]
            assert record.gt_short.waypoint == first
            assert record.gt_future_grid == imagine(record.scene, first)

    def test_history_feeds_estimation(self, small_dataset):
        for record in small_dataset:
            assert len(record.scene.ego_history) >= 3
            assert record.scene.ego_history[-1].x == pytest.approx(record.scene.ego.position.x)

    def test_proportions_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(goal_mix={MissionGoal.FORWARD: 0.5, MissionGoal.LEFT: 0.2})

    def test_exhausted_attempts(self, monkeypatch):
        monkeypatch.setattr(data_service, "expert_plan", lambda *args, **kwargs: None)
        with pytest.raises(GenerationError) as excinfo:
            generate_scenarios(ScenarioConfig(n_scenes=1, max_attempts=2, agents_max=0, agents_min=0))
        assert excinfo.value.index == 0
        assert excinfo.value.reasons == ["no collision-free expert plan"] * 2
        assert excinfo.value.exit_code == 3

    def test_stats(self, small_dataset):
        stats = dataset_stats(small_dataset)
        assert stats["records"] == 10
        assert stats["splits"] == {"train": 8, "val": 2}
        assert sum(stats["goals"].values()) == 10
        assert dataset_stats([])["agents_mean"] == 0.0


class TestExpertPlan:
    """Test the scripted expert"""

    def test_open_road_follows_goal(self, empty_scene):
        plan = expert_plan(empty_scene, MissionGoal.LEFT)
        assert plan.action.lateral == Lateral.LEFT
        assert plan.action.longitudinal == Longitudinal.KEEP
        # zero acceleration, left yaw-rate level
        assert plan.tokens == (DEFAULT_VOCAB.token(DEFAULT_VOCAB.accel_index(0.0), CURVATURE_OF[Lateral.LEFT]),) * 6

    @pytest.mark.parametrize("accel, longitudinal", [(1.0, Longitudinal.ACCELERATE), (-1.0, Longitudinal.DECELERATE)])
    def test_holds_current_acceleration(self, accel, longitudinal):
        scene = make_scene(speed=4.0, accel=accel)
        plan = expert_plan(scene, MissionGoal.FORWARD)
        assert plan.tokens == (DEFAULT_VOCAB.token(DEFAULT_VOCAB.accel_index(accel), STRAIGHT),) * 6
        assert plan.action == ActionLabel(lateral=Lateral.FORWARD, longitudinal=longitudinal)
        speeds = np.linalg.norm(np.diff(np.vstack([[0.0, 0.0], plan.trajectory.as_array()]), axis=0), axis=1) / 0.5
        assert speeds == pytest.approx([4.0 + accel * 0.5 * k for k in range(1, 7)])

    def test_slows_behind_parked_car(self, blocked_scene):
        plan = expert_plan(blocked_scene, MissionGoal.FORWARD)
        assert plan is not None
        assert plan.action.longitudinal in (Longitudinal.DECELERATE, Longitudinal.STOP)
        assert not any(collisions_along(blocked_scene, plan.trajectory))
        # the parked car's rear bumper is at y = 5
        assert plan.trajectory.points[-1].y + EGO_FOOTPRINT[0] / 2 < 5.0

    def test_oncoming_block_has_no_plan(self):
        truck = vehicle("truck", 0.0, 8.0, vy=-10.0, footprint=(8.0, 6.0))
        assert expert_plan(make_scene(speed=4.0, agents=[truck]), MissionGoal.FORWARD) is None

    def test_profiles_ramp_from_hold(self):
        profiles = accel_profiles(start=4, levels=7, horizon=6)
        assert profiles[0] == (4,) * 6
        assert len(set(profiles)) == len(profiles)
        for profile in profiles:
            assert all(abs(b - a) <= 1 for a, b in zip(profile[1:], profile[2:]))

    def test_longitudinal_labels(self):
        assert longitudinal_label(4.0, [4.0, 4.0, 4.5]) == Longitudinal.KEEP
        assert longitudinal_label(4.0, [4.5, 5.0]) == Longitudinal.ACCELERATE
        assert longitudinal_label(4.0, [3.5, 3.0]) == Longitudinal.DECELERATE
        assert longitudinal_label(4.0, [2.0, 0.0]) == Longitudinal.STOP
        assert longitudinal_label(0.0, [0.0, 0.0]) == Longitudinal.STOP


class TestGroundTruthSample:
    """Test the ground-truth six-segment sample"""

    def test_well_formed(self, small_dataset):
        for record in small_dataset:
            report = check_format(serialize(make_gt_sample(record)))
            assert report.ok, report.errors

    def test_carries_record_labels(self, small_dataset):
        record = small_dataset[0]
        sample = make_gt_sample(record)
        assert sample.action == record.gt_action
        assert sample.answer == record.gt_trajectory
        assert len(sample.visual) == record.gt_future_grid.spec.num_cells

    def test_narration(self):
        assert perception_text(make_scene()) == "ego speed 0.0 m/s; no dynamic agents"
        clear = think_text([(k, math.inf) for k in range(6)], 0.5, 1.065)
        assert clear == "imagined frame shows a clear corridor over 3.0 s; keep the plan"
        blocked = think_text([(0, math.inf), (1, 0.4), (2, 0.2)], 0.5, 1.065)
        assert "near step 3" in blocked


class TestDatasetFile:
    """Test JSONL persistence"""

    def test_round_trip(self, small_dataset, tmp_path):
        path = tmp_path / "data" / "train.jsonl"
        save_dataset(small_dataset, path)
        assert load_dataset(path) == small_dataset
        header = json.loads(path.read_text().split("\n")[0])
        assert header == {"count": 10, "format": "vla-world-dataset", "version": 1}

    def test_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        save_dataset([], path)
        assert load_dataset(path) == []

    def test_truncated_record(self, small_dataset, tmp_path):
        path = tmp_path / "train.jsonl"
        save_dataset(small_dataset, path)
        lines = path.read_text().split("\n")
        lines[3] = lines[3][:40]
        path.write_text("\n".join(lines))
        with pytest.raises(DatasetFormatError) as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 4

    def test_count_mismatch(self, small_dataset, tmp_path):
        path = tmp_path / "train.jsonl"
        save_dataset(small_dataset, path)
        lines = path.read_text().rstrip("\n").split("\n")
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(DatasetFormatError, match="expected 10 records, found 9"):
            load_dataset(path)

    @pytest.mark.parametrize(
        "header, reason",
        [("", "missing header"), ("not json", "bad header"), ('{"format": "csv"}', "not a dataset file")],
    )
    def test_bad_header(self, tmp_path, header, reason):
        path = tmp_path / "bad.jsonl"
        path.write_text(header)
        with pytest.raises(DatasetFormatError, match=reason) as excinfo:
            load_dataset(path)
        assert excinfo.value.line == 1

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v2.jsonl"
        path.write_text('{"count": 0, "format": "vla-world-dataset", "version": 2}\n')
        with pytest.raises(DatasetFormatError, match="unsupported version 2"):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            load_dataset(tmp_path / "absent.jsonl")
