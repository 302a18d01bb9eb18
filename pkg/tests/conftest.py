import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import isothermic  # noqa: F401  (enables x64 before any jax array is built)

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
