import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")


@pytest.fixture(scope="session")
def modes():
    from ionqec.crystal import default_modes
    return default_modes()


@pytest.fixture(scope="session")
def model():
    from ionqec.coupling import default_phase_model
    return default_phase_model()


# one verdict line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
