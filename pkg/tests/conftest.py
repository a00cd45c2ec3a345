import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

FIXTURES = Path(__file__).resolve().parent.parent / "docs" / "fixtures"

settings.register_profile("repro", derandomize=True, deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repro")


@pytest.fixture
def fixture_path():
    return lambda name: FIXTURES / name


@pytest.fixture
def load_fixture():
    return lambda name: json.loads((FIXTURES / name).read_text())


# one summary line per acceptance criterion, printed after the run
_CRITERIA = {}


@pytest.fixture(scope="session")
def record_criterion():
    def record(number, passed, text, seconds):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {text}  ({seconds:.1f} s)"
        _CRITERIA[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
