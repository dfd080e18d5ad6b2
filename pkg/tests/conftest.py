import pytest

from cavsol import dynamics1d as d1
from cavsol.core import SimulationParams, build_ensemble


@pytest.fixture(scope="session")
def params():
    return SimulationParams()


@pytest.fixture(scope="session")
def ensemble(params):
    return build_ensemble(params)


@pytest.fixture(scope="session")
def small_ensemble():
    return build_ensemble(SimulationParams(n_momentum=41))


@pytest.fixture(scope="session")
def init(ensemble):
    return d1.initial_state(ensemble)
