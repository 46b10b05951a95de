import numpy as np
import pytest

from vvsearch.config import make_config, u_example_config
from vvsearch.scenarios import u_environment
from vvsearch.sim import World
from vvsearch.target import ManeuverTable, build_markov_matrix, build_target_graph
from vvsearch.tiles import generate_preset


@pytest.fixture(scope="session")
def u_env():
    return u_environment()


@pytest.fixture(scope="session")
def u_world():
    return World(u_example_config())


@pytest.fixture(scope="session")
def u_graph(u_env):
    return build_target_graph(u_env.road, 5.0, (5.0, 10.0, 15.0))


@pytest.fixture(scope="session")
def u_model(u_graph):
    return build_markov_matrix(u_graph, ManeuverTable.bundled(15))


@pytest.fixture(scope="session")
def medium_env():
    return generate_preset("medium", 1)


@pytest.fixture(scope="session")
def medium_config(tmp_path_factory):
    return make_config({"cache_dir": str(tmp_path_factory.mktemp("cache"))})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
