import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from swarmpref.configs import GpConfig, MissionConfig
from swarmpref.mission import load_oracle
from swarmpref.prototypes import load_prototypes
from swarmpref.world import load_scenario, scenario_from_dict

FIXTURES = ROOT / "fixtures"


def box(x0, y0, z0, x1, y1, z1):
    return {"min": [float(x0), float(y0), float(z0)],
            "max": [float(x1), float(y1), float(z1)]}


@pytest.fixture(scope="session")
def probe_scene():
    """One box in a 10 m cube; ray and feature hand values are frozen
    against exactly this geometry."""
    return scenario_from_dict({
        "bounds": box(0, 0, 0, 10, 10, 10),
        "obstacles": [box(4, 4, 0, 6, 6, 5)],
        "regions": [{"label": "open_space", "box": box(0, 0, 0, 10, 10, 10)}],
        "goal": [8.0, 5.0, 2.0],
        "grid_resolution": 1.0,
        "robot_edge": 0.3,
    })


@pytest.fixture(scope="session")
def pillar_scenario():
    """Short corridor with one pillar to route around; missions finish in
    a few waypoints."""
    return scenario_from_dict({
        "bounds": box(0, 0, 0, 24, 16, 6),
        "obstacles": [box(10, 0, 0, 12, 5, 6)],
        "regions": [{"label": "open_space", "box": box(0, 0, 0, 12, 16, 6)},
                    {"label": "park", "box": box(12, 0, 0, 24, 16, 6)}],
        "goal": [21.0, 8.0, 2.0],
        "grid_resolution": 1.0,
        "robot_edge": 0.3,
    })


@pytest.fixture(scope="session")
def eight_env():
    return load_scenario(FIXTURES / "eight_env.json")


@pytest.fixture(scope="session")
def eight_oracle():
    return load_oracle(FIXTURES / "oracle_eight.json")


@pytest.fixture(scope="session")
def proto_library():
    return load_prototypes(FIXTURES / "prototypes.json")


@pytest.fixture
def fast_gp_cfg():
    return GpConfig(n_latents=2, n_inducing=8, n_steps=60, batch_size=16, seed=3)


@pytest.fixture
def fast_mission_cfg():
    return MissionConfig(seed=1, n_robots=3, query_budget=3, max_ticks=2500,
                         model_update_steps=25, start=(3.0, 8.0, 1.5),
                         query_timeout_s=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
