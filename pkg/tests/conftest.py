import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from netsir.contact_graph import TopologyConfig  # noqa: E402
from netsir.sir_dynamics import EpidemicParams  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture
def small_topology():
    return TopologyConfig(n=80, n_groups=2, n_connect=12, seed=3)


@pytest.fixture
def small_params():
    return EpidemicParams(init_infected=6, steps=120)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
