import os

import numpy as np
import pytest

# Reports must not depend on the thread count; pin it for in-process runs.
os.environ.setdefault("IIM_THREADS", "1")

# Filled by tests/test_acceptance.py; printed after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
