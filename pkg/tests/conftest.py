import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mimo_ae.rng import RngStream

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def stream():
    return RngStream(1234, 99)


@pytest.fixture
def nprng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
