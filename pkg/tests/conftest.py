import numpy as np
import pytest

from teampsa.config import reference_scenario
from teampsa.harness import run_montecarlo


@pytest.fixture(scope="session")
def reference_config():
    return reference_scenario()


@pytest.fixture(scope="session")
def reference_report(reference_config):
    """Full reference scenario, 100 trials; shared by harness and acceptance tests."""
    return run_montecarlo(reference_config, keep_trials=True)


def random_spd(rng, n, jitter=0.1):
    M = rng.standard_normal((n, n))
    return M @ M.T + jitter * np.eye(n)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
