import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tendon_relax import kinematics as kin

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_scenario_logs(caplog):
    caplog.set_level(logging.ERROR, logger="tendon_relax")


@pytest.fixture
def model():
    return kin.default_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
