import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qpburst import build_reference_device


@pytest.fixture(scope="session")
def reference_device():
    return build_reference_device()


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-criterion result lines after the test summary."""
    lines = sys.modules.get("test_acceptance")
    lines = getattr(lines, "CRITERION_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
