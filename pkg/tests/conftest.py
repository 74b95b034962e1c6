import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from echo_thermo.lattice import TfimParams, build_lattice

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def hc10():
    return build_lattice("honeycomb10")


@pytest.fixture(scope="session")
def ring4():
    return build_lattice("ring4")


@pytest.fixture(scope="session")
def tfim():
    return TfimParams(1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
