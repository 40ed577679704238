import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cogsim.channel import baseline_spec, perfect_spec, retx_spec

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def baseline():
    return baseline_spec()


@pytest.fixture
def retx():
    return retx_spec()


@pytest.fixture
def perfect():
    return perfect_spec()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
