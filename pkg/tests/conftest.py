import numpy as np
import pytest

from sl2walk import limits as lt
from sl2walk import measures as ms
from sl2walk import sphere as sp
from sl2walk.transfer import EmpiricalMeasure


@pytest.fixture(scope="session")
def grid():
    return sp.default_grid()


@pytest.fixture(scope="session")
def schottky():
    return ms.fixture("schottky2")


@pytest.fixture(scope="session")
def nu_schottky(schottky):
    """2e5 boundary points of schottky2, shared by the slower tests."""
    return EmpiricalMeasure(lt.boundary_points(schottky, 200_000, rng=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
