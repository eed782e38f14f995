import numpy as np
import pytest

from doublephase.mesh import FemSpace, build_unit_square_mesh
from doublephase.musielak import ExponentConfig, WeightField


@pytest.fixture(scope="session")
def space4():
    return FemSpace(build_unit_square_mesh(4))


@pytest.fixture(scope="session")
def space8():
    return FemSpace(build_unit_square_mesh(8))


@pytest.fixture(scope="session")
def space16():
    return FemSpace(build_unit_square_mesh(16))


@pytest.fixture(scope="session")
def cfg():
    return ExponentConfig(1.4, 1.8)


@pytest.fixture(scope="session")
def mu8(space8):
    return WeightField.linear_x1(space8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
