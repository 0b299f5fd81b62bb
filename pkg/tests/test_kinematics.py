import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vla_world_lab.core.errors import PreconditionError
from vla_world_lab.schemas.scene import EgoState, Lateral, Trajectory, Vec2
from vla_world_lab.utils.kinematics import (
    FusionConfig,
    KinematicState,
    constant_acceleration_track,
    estimate_state,
    fuse_acceleration,
    goal_acceleration,
    heading_label,
    jerk_profile,
    mean_jerk,
    predict_from_history,
    predict_short,
)
from vla_world_lab.utils.trajectory_vocab import CURVATURE_OF, STRAIGHT, TrajectoryVocabulary

coords = st.integers(-20_000, 20_000).map(lambda v: v / 1000)


def v(x: float, y: float) -> Vec2:
    return Vec2(x=x, y=y)


class TestStateEstimation:
    """Test finite-difference velocity and acceleration"""

    def test_three_point_history(self):
        state = estimate_state([v(0, 0), v(0, 1), v(0, 2.2)], dt=0.5)
        assert state.velocity.x == pytest.approx(0.0)
        assert state.velocity.y == pytest.approx(2.4)
        assert state.inertial_accel.y == pytest.approx(0.8)

    def test_uses_last_three_points(self):
        state = estimate_state([v(5, 5), v(0, 0), v(0, 1), v(0, 2.2)], dt=0.5)
        assert state.velocity.y == pytest.approx(2.4)

    def test_short_history_rejected(self):
        with pytest.raises(PreconditionError):
            estimate_state([v(0, 0), v(0, 1)])

    def test_non_positive_dt_rejected(self):
        with pytest.raises(PreconditionError):
            estimate_state([v(0, 0), v(0, 1), v(0, 2)], dt=0.0)

    @given(vx=coords, vy=coords, ax=coords, ay=coords)
    @settings(max_examples=50, deadline=None)
    def test_recovers_constant_acceleration_track(self, vx, vy, ax, ay):
        track = constant_acceleration_track(v(1.0, -2.0), v(vx, vy), v(ax, ay), 3, dt=0.5)
        state = estimate_state(track, dt=0.5)
        assert state.velocity.x == pytest.approx(vx, abs=1e-9)
        assert state.velocity.y == pytest.approx(vy, abs=1e-9)
        assert state.inertial_accel.x == pytest.approx(ax, abs=1e-8)
        assert state.inertial_accel.y == pytest.approx(ay, abs=1e-8)


class TestAccelerationFusion:
    """Test goal acceleration, fusion and the short-horizon waypoint"""

    def test_goal_acceleration(self):
        state = KinematicState(velocity=v(0, 2), inertial_accel=v(0, 0))
        a = goal_acceleration(state, v(1, 1), lookahead_s=0.5)
        assert (a.x, a.y) == pytest.approx((8.0, 0.0))

    def test_fuse_midpoint(self):
        a = fuse_acceleration(v(0, 0.8), v(8, 0), 0.5)
        assert (a.x, a.y) == pytest.approx((4.0, 0.4))

    @pytest.mark.parametrize("weight", [-0.1, 1.5])
    def test_fuse_weight_out_of_range(self, weight):
        with pytest.raises(PreconditionError):
            fuse_acceleration(v(0, 0), v(1, 1), weight)

    def test_predict_short(self):
        state = KinematicState(velocity=v(0, 2), inertial_accel=v(0, 0))
        p = predict_short(v(0, 2), state, v(0, 4), lookahead_s=0.5)
        assert (p.x, p.y) == pytest.approx((0.0, 3.5))

    def test_predict_short_rejects_bad_lookahead(self):
        state = KinematicState(velocity=v(0, 2), inertial_accel=v(0, 0))
        with pytest.raises(PreconditionError):
            predict_short(v(0, 0), state, v(0, 0), lookahead_s=0.0)

    @given(vx=coords, vy=coords, dx=coords, dy=coords)
    @settings(max_examples=50, deadline=None)
    def test_full_intention_lands_on_ideal_displacement(self, vx, vy, dx, dy):
        state = KinematicState(velocity=v(vx, vy), inertial_accel=v(3.0, -1.0))
        a_goal = goal_acceleration(state, v(dx, dy), 0.5)
        p = predict_short(v(2.0, 1.0), state, fuse_acceleration(state.inertial_accel, a_goal, 1.0), 0.5)
        assert p.x == pytest.approx(2.0 + dx, abs=1e-9)
        assert p.y == pytest.approx(1.0 + dy, abs=1e-9)

    def test_pure_inertia_ignores_goal(self):
        history = [v(0, 0), v(0, 1), v(0, 2.2)]
        left = predict_from_history(history, Lateral.LEFT, FusionConfig(fusion_weight=0.0))
        right = predict_from_history(history, Lateral.RIGHT, FusionConfig(fusion_weight=0.0))
        assert left.waypoint == right.waypoint
        # 2.2 + 2.4 * 0.5 + 0.5 * 0.8 * 0.25
        assert left.waypoint.y == pytest.approx(3.5)

    def test_configured_goal_offset(self):
        cfg = FusionConfig(fusion_weight=1.0, goal_offsets={Lateral.LEFT: v(-1.0, 1.2)})
        short = predict_from_history([v(0, 0), v(0, 1), v(0, 2)], Lateral.LEFT, cfg)
        assert (short.waypoint.x, short.waypoint.y) == pytest.approx((-1.0, 3.2))
        assert short.direction == Lateral.LEFT


class TestHeadingLabel:
    """Test direction labels from displacement bearings"""

    @pytest.mark.parametrize(
        "dx, dy, expected",
        [
            (-1.0, 1.0, Lateral.LEFT),
            (1.0, 1.0, Lateral.RIGHT),
            (0.1, 1.0, Lateral.FORWARD),
            (0.0, 0.0, Lateral.FORWARD),
        ],
    )
    def test_labels(self, dx, dy, expected):
        assert heading_label(v(dx, dy)) == expected

    def test_threshold(self):
        bearing = math.radians(12.0)
        point = v(-math.sin(bearing), math.cos(bearing))
        assert heading_label(point, threshold_deg=10.0) == Lateral.LEFT
        assert heading_label(point, threshold_deg=15.0) == Lateral.FORWARD

    @given(dx=coords, dy=coords, scale=st.integers(1, 1000).map(lambda s: s / 10))
    @settings(max_examples=50, deadline=None)
    def test_scale_invariant(self, dx, dy, scale):
        assert heading_label(v(dx, dy)) == heading_label(v(dx * scale, dy * scale))


class TestJerkProfile:
    """Test jerk reconstruction from waypoints"""

    def test_profile(self):
        traj = Trajectory.from_array([[0, 1], [0, 2], [0, 4], [0, 8]], step_s=0.5)
        profile = jerk_profile(traj, v0=v(0, 2), a0=v(0, 0))
        assert profile == pytest.approx([0.0, 8.0, 8.0])

    def test_constant_velocity_is_smooth(self):
        traj = Trajectory.from_array([[0, k] for k in range(1, 7)], step_s=0.5)
        assert jerk_profile(traj, v0=v(0, 2), a0=v(0, 0)) == pytest.approx([0.0] * 5)

    def test_needs_three_waypoints(self):
        with pytest.raises(PreconditionError):
            jerk_profile(Trajectory.from_array([[0, 1], [0, 2]]), v(0, 0), v(0, 0))

    def test_start_counts_first_segment(self):
        traj = Trajectory.from_array([[0, 1], [0, 2], [0, 4], [0, 8]], step_s=0.5)
        assert mean_jerk(traj, v(0, 2), v(0, 0), start=v(0, 0)) == pytest.approx(4.0)
        assert mean_jerk(traj, v(0, 2), v(0, 0)) == pytest.approx(16.0 / 3)


def ego_at(speed: float) -> EgoState:
    return EgoState(velocity=v(0.0, speed), heading=math.pi / 2)


class TestTrajectoryVocabulary:
    """Test acceleration and yaw-rate tokens"""

    def test_constant_acceleration(self):
        vocab = TrajectoryVocabulary()
        tokens = [vocab.token(vocab.accel_index(1.0), STRAIGHT)] * 6
        assert vocab.speeds(tokens, ego_at(4.0)) == pytest.approx([4.5, 5.0, 5.5, 6.0, 6.5, 7.0])
        assert vocab.decode(tokens, ego_at(4.0)).points[-1].y == pytest.approx(0.5 * sum([4.5, 5.0, 5.5, 6.0, 6.5, 7.0]))

    def test_speed_clips_and_stopped_ego_does_not_turn(self):
        vocab = TrajectoryVocabulary()
        hard_left = vocab.token(vocab.accel_index(-4.0), CURVATURE_OF[Lateral.LEFT])
        plan = vocab.decode([hard_left] * 6, ego_at(2.0))
        assert vocab.speeds([hard_left] * 6, ego_at(2.0)) == [0.0] * 6
        assert plan.as_array() == pytest.approx([[0.0, 0.0]] * 6)

    def test_speed_cap(self):
        vocab = TrajectoryVocabulary(speed_cap=5.0)
        assert max(vocab.speeds([vocab.token(vocab.accel_index(2.0), STRAIGHT)] * 6, ego_at(4.0))) == 5.0

    def test_stopped_steps_encode_as_zero_acceleration(self):
        vocab = TrajectoryVocabulary()
        still = Trajectory.from_array([[0.0, 0.0]] * 6)
        assert vocab.encode(still, ego_at(0.0)) == [vocab.token(vocab.accel_index(0.0), STRAIGHT)] * 6

    @given(
        tokens=st.lists(st.integers(0, 20), min_size=6, max_size=6),
        speed=st.sampled_from([0.0, 2.0, 4.0, 6.0]),
    )
    @settings(max_examples=50, deadline=None)
    def test_encode_reproduces_decoded_paths(self, tokens, speed):
        vocab = TrajectoryVocabulary()
        plan = vocab.decode(tokens, ego_at(speed))
        assert vocab.decode(vocab.encode(plan, ego_at(speed)), ego_at(speed)).as_array() == pytest.approx(
            plan.as_array(), abs=1e-9
        )

    def test_rejects_unknown_token(self):
        with pytest.raises(ValueError):
            TrajectoryVocabulary().decode([21], ego_at(4.0))
