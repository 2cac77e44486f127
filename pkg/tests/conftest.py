import pytest
from hypothesis import HealthCheck, settings

from rampmerge.config import preset
from rampmerge.simulator import planning_scene, run_fifo, run_hcomc

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by test_acceptance.py, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def cond1():
    return preset("condition1", seed=0)


@pytest.fixture(scope="session")
def scene1(cond1):
    return planning_scene(cond1, 0)


@pytest.fixture(scope="session")
def hcomc_run(cond1):
    return run_hcomc(cond1, 0)


@pytest.fixture(scope="session")
def fifo_run(cond1):
    return run_fifo(cond1, 0)
