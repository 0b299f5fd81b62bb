import math

import pytest

from vla_world_lab.schemas.dataset import ScenarioConfig
from vla_world_lab.schemas.scene import AgentKind, AgentState, EgoState, Scene, Vec2
from vla_world_lab.schemas.world import GridSpec
from vla_world_lab.services.data_service import generate_scenarios
from vla_world_lab.services.policy_service import PolicyService
from vla_world_lab.utils.kinematics import constant_acceleration_track


def make_scene(speed: float = 0.0, agents=(), boundaries=(), accel: float = 0.0) -> Scene:
    """Ego at the origin heading +y with a constant-acceleration history."""
    velocity, acceleration = Vec2(x=0.0, y=speed), Vec2(x=0.0, y=accel)
    origin = Vec2(x=0.0, y=0.0)
    return Scene(
        ego=EgoState(position=origin, velocity=velocity, acceleration=acceleration, heading=math.pi / 2),
        agents=list(agents),
        boundaries=list(boundaries),
        ego_history=constant_acceleration_track(origin, velocity, acceleration, 3),
    )


def vehicle(agent_id: str, x: float, y: float, vx: float = 0.0, vy: float = 0.0, **kw) -> AgentState:
    return AgentState(id=agent_id, kind=AgentKind.VEHICLE, position=Vec2(x=x, y=y), velocity=Vec2(x=vx, y=vy), **kw)


@pytest.fixture
def empty_scene() -> Scene:
    return make_scene(speed=4.0)


@pytest.fixture
def blocked_scene() -> Scene:
    """Parked car straight ahead of a moving ego."""
    return make_scene(speed=4.0, agents=[vehicle("lead", 0.0, 7.0, heading=math.pi / 2)])


@pytest.fixture(scope="session")
def scenario_config() -> ScenarioConfig:
    return ScenarioConfig(n_scenes=10, seed=3)


@pytest.fixture(scope="session")
def small_dataset(scenario_config):
    return generate_scenarios(scenario_config)


@pytest.fixture
def policy() -> PolicyService:
    return PolicyService()


@pytest.fixture
def small_grid_policy() -> PolicyService:
    """8 x 8 grid keeps finite-difference checks cheap."""
    return PolicyService(grid=GridSpec(cells_per_side=8, extent_m=32.0))


@pytest.fixture
def params(policy):
    return policy.init_params(seed=0)
