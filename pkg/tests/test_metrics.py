import math

import numpy as np
import pytest

from tests.conftest import make_scene
from vla_world_lab.core.errors import NumericalError, PreconditionError
from vla_world_lab.schemas.scene import ActionLabel, AgentKind, AgentState, Lateral, Longitudinal, Trajectory, Vec2
from vla_world_lab.schemas.world import GridSpec, OccupancyGrid
from vla_world_lab.services.data_service import make_gt_sample
from vla_world_lab.services.metrics_service import (
    CollisionReport,
    MetricsService,
    action_f1,
    collision_rates,
    collision_report,
    frechet_distance,
    frechet_from_moments,
    grid_features,
    l2_report,
)

GT = Trajectory.from_array([[0.0, float(k)] for k in range(1, 7)])


def label(lat: Lateral, lon: Longitudinal = Longitudinal.KEEP) -> ActionLabel:
    return ActionLabel(lateral=lat, longitudinal=lon)


class TestL2:
    """Test displacement errors under both horizon protocols"""

    def test_protocols(self):
        offsets = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        pred = Trajectory.from_array(GT.as_array() + np.stack([offsets, np.zeros(6)], axis=1))
        report = l2_report(pred, GT)
        assert report.per_step == pytest.approx(offsets.tolist())
        assert [report.stp3_at[k] for k in ("1s", "2s", "3s")] == pytest.approx([0.15, 0.25, 0.35])
        assert [report.uniad_at[k] for k in ("1s", "2s", "3s")] == pytest.approx([0.2, 0.4, 0.6])
        assert report.stp3_avg == pytest.approx(0.25)
        assert report.uniad_avg == pytest.approx(0.4)

    def test_perfect_plan(self):
        report = l2_report(GT, GT)
        assert report.stp3_avg == 0.0
        assert report.uniad_avg == 0.0

    def test_length_mismatch(self):
        with pytest.raises(PreconditionError):
            l2_report(Trajectory.from_array(GT.as_array()[:4]), GT)

    def test_short_horizon(self):
        short = Trajectory.from_array(GT.as_array()[:4])
        with pytest.raises(PreconditionError, match="3s"):
            l2_report(short, short)


class TestCollisions:
    """Test per-step collision flags and their rates"""

    def test_crossing_pedestrian(self):
        walker = AgentState(
            id="p", kind=AgentKind.PEDESTRIAN, position=Vec2(x=-8.0, y=4.0), velocity=Vec2(x=4.0, y=0.0), footprint=(0.6, 0.6)
        )
        report = collision_report(GT, make_scene(agents=[walker]))
        assert report.per_step == [False, False, False, True, False, False]
        assert report.count == 1
        rates = collision_rates([report])
        assert rates.uniad_at["2s"] == 1.0
        assert rates.uniad_at["1s"] == 0.0
        assert rates.stp3_at["2s"] == pytest.approx(0.25)

    def test_rates_average_scenes(self):
        hit = CollisionReport(per_step=[True] * 6)
        clear = CollisionReport(per_step=[False] * 6)
        rates = collision_rates([hit, clear, clear, clear])
        assert rates.per_step == pytest.approx([0.25] * 6)
        assert rates.stp3_avg == pytest.approx(0.25)

    def test_no_reports(self):
        with pytest.raises(PreconditionError):
            collision_rates([])


class TestActionF1:
    """Test per-class action F1"""

    def test_swapped_labels(self):
        scores = action_f1([label(Lateral.FORWARD), label(Lateral.LEFT)], [label(Lateral.LEFT), label(Lateral.FORWARD)])
        assert scores["left"] == 0.0
        assert scores["forward"] == 0.0
        assert scores["keep"] == 1.0

    def test_absent_class_is_vacuous(self):
        scores = action_f1([label(Lateral.FORWARD)], [label(Lateral.FORWARD)])
        assert scores["right"] == 1.0
        assert scores["stop"] == 1.0
        assert set(scores) == {"forward", "left", "right", "keep", "accelerate", "decelerate", "stop"}

    def test_partial_recall(self):
        gt = [label(Lateral.LEFT), label(Lateral.LEFT), label(Lateral.RIGHT)]
        pred = [label(Lateral.LEFT), label(Lateral.RIGHT), label(Lateral.RIGHT)]
        scores = action_f1(pred, gt)
        # left: precision 1, recall 1/2; right: precision 1/2, recall 1
        assert scores["left"] == pytest.approx(2 / 3)
        assert scores["right"] == pytest.approx(2 / 3)

    def test_length_mismatch(self):
        with pytest.raises(PreconditionError):
            action_f1([label(Lateral.LEFT)], [])


class TestFrechet:
    """Test the Gaussian Fréchet distance"""

    @pytest.mark.parametrize(
        "mu_b, cov_b, expected",
        [([1.0], [[1.0]], 1.0), ([0.0], [[4.0]], 1.0), ([0.0], [[1.0]], 0.0)],
    )
    def test_one_dimensional(self, mu_b, cov_b, expected):
        assert frechet_from_moments([0.0], [[1.0]], mu_b, cov_b) == pytest.approx(expected, abs=1e-12)

    def test_diagonal_closed_form(self):
        mu_a, mu_b = np.array([0.0, 1.0]), np.array([2.0, 1.0])
        var_a, var_b = np.array([1.0, 9.0]), np.array([4.0, 1.0])
        expected = 4.0 + np.sum(var_a + var_b - 2 * np.sqrt(var_a * var_b))
        assert frechet_from_moments(mu_a, np.diag(var_a), mu_b, np.diag(var_b)) == pytest.approx(expected)

    def test_identical_sets(self):
        x = np.random.default_rng(0).standard_normal((50, 3))
        assert frechet_distance(x, x) == pytest.approx(0.0, abs=1e-9)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((40, 4)), rng.standard_normal((40, 4)) + 0.5
        assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), rel=1e-8)

    def test_rejects_indefinite_covariance(self):
        with pytest.raises(NumericalError):
            frechet_from_moments([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], np.eye(2))

    def test_needs_two_samples(self):
        with pytest.raises(PreconditionError):
            frechet_distance(np.zeros((1, 3)), np.zeros((5, 3)))

    def test_zero_projection(self):
        grid = OccupancyGrid.from_array(np.zeros(64, dtype=np.int64), GridSpec(cells_per_side=8))
        features = grid_features(grid, d=5, projection=np.zeros((64 * 8, 5)))
        assert features.tolist() == [0.0] * 5

    def test_features_are_seeded(self):
        grid = OccupancyGrid.from_array(np.arange(64) % 8, GridSpec(cells_per_side=8))
        assert np.array_equal(grid_features(grid, seed=3, d=16), grid_features(grid, seed=3, d=16))
        assert not np.array_equal(grid_features(grid, seed=3, d=16), grid_features(grid, seed=4, d=16))


class TestMetricsService:
    """Test dataset-level evaluation"""

    def test_ground_truth_samples(self, small_dataset):
        samples = [make_gt_sample(r) for r in small_dataset]
        report = MetricsService().evaluate_samples(small_dataset, samples)
        assert report.l2_stp3_avg == pytest.approx(0.0, abs=1e-6)
        assert report.collision_count == 0
        assert all(v == 1.0 for v in report.action_f1.values())
        assert report.frechet == pytest.approx(0.0, abs=1e-6)
        assert report.rewards["r_fmt"] == 1.0
        assert report.rewards["r_vis"] == 1.0
        assert report.rewards["r_act"] == 1.0

    def test_single_record_has_no_frechet(self, small_dataset):
        report = MetricsService().evaluate_samples(small_dataset[:1], [make_gt_sample(small_dataset[0])])
        assert report.frechet is None

    def test_mismatched_inputs(self, small_dataset):
        with pytest.raises(PreconditionError):
            MetricsService().evaluate_samples(small_dataset[:2], [make_gt_sample(small_dataset[0])])

    def test_bad_visual_skipped_in_frechet(self, small_dataset):
        samples = [make_gt_sample(r) for r in small_dataset]
        broken = samples[0].model_copy(update={"visual": samples[0].visual.model_copy(update={"tokens": (0, 1)})})
        report = MetricsService().evaluate_samples(small_dataset, [broken] + samples[1:])
        assert report.frechet is not None
        assert math.isfinite(report.frechet)
        assert report.rewards["r_vis"] < 1.0
