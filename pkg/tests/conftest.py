import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fraccyl.grid import CrossSection, CylinderDomain, build_grid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1d():
    return build_grid(CrossSection(), 1.0 / 16)


@pytest.fixture
def grid2d():
    return build_grid(CylinderDomain(2.0), 0.25)
