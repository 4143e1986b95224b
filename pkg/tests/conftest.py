from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nullconv.manifold import polar_disk

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk0():
    return polar_disk(0)


@pytest.fixture(scope="session")
def disk1():
    return polar_disk(1)


@pytest.fixture(scope="session")
def disk2():
    return polar_disk(2)


@pytest.fixture(scope="session")
def disk5():
    return polar_disk(5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
