import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cluschurn.data import default_spec, generate_synthetic  # noqa: E402


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(default_spec(3), 120)


@pytest.fixture(scope="session")
def default_dataset():
    return generate_synthetic(default_spec(0), 600)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
