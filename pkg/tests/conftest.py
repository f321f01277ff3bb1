import numpy as np
import pytest

from chauffeur.core import validate_params
from chauffeur.solution import get_geometry


@pytest.fixture(scope="session")
def params_03():
    return validate_params(0.3, 0.5)


@pytest.fixture(scope="session")
def params_02():
    return validate_params(0.2, 0.5)


@pytest.fixture(scope="session")
def geom_03(params_03):
    return get_geometry(params_03)


@pytest.fixture(scope="session")
def geom_02(params_02):
    return get_geometry(params_02)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
