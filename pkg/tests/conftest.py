import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ipfdyn", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ipfdyn")

A3 = np.array([[2.0, 3.0], [3.0, 10.0]])
X0 = np.array([1.0, 1.0])


@pytest.fixture
def a3():
    return A3.copy(), X0.copy()


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(acceptance_log.LINES):
        terminalreporter.write_line(acceptance_log.LINES[k])
