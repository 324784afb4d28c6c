import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def shear_bundle():
    from clebschlab.diagnostics import FormBundle
    from clebschlab.scenarios import build

    sc = build("shear", beta=0.5)
    return sc, FormBundle(sc.state())
