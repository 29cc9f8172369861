import functools

import pytest

from curveflow.runner import run_scenario
from curveflow.scenario import preset

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def preset_run(name):
    """Run a bundled preset once per session; returns (trajectory, summary)."""
    return run_scenario(preset(name))


@pytest.fixture(scope="session")
def runs():
    return preset_run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
