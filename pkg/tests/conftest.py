import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bampf_lab import mdp as mdp_mod
from bampf_lab.envs import caterpillar

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile (or load cached) jitted kernels before anything is timed."""
    prior = caterpillar()
    mdp_mod.value_iteration(prior.candidates[0])
    prior.optimal_values
    yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
