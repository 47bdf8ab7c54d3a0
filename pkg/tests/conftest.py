import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from artifact.blowup_engine import run_pipeline, theta_sequence  # noqa: E402


@pytest.fixture(scope="session")
def atlas5():
    return run_pipeline(5, check_invariants=True)


@pytest.fixture(scope="session")
def theta5_full():
    return theta_sequence(5, mode="full")


@pytest.fixture(scope="session")
def theta5():
    return theta_sequence(5, mode="preferred")


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
