import numpy as np
import pytest
from hypothesis import settings, HealthCheck

from ifslab.pwl_core import am_ifs

settings.register_profile(
    "ifslab",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ifslab")


@pytest.fixture(scope="session")
def ifs03():
    """The canonical family at c = 0.3 used throughout the examples."""
    return am_ifs(0.3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260823)
