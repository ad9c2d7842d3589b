import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from deconvest.model import Theta

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture
def theta0():
    return Theta(0.7, 0.3)


@pytest.fixture
def beta_study():
    return 1.0 / (np.sqrt(5.0) * np.pi)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
