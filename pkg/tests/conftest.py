import pytest

from dronebar import Gains, PhysicalParams

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def p():
    return PhysicalParams()


@pytest.fixture
def gains():
    return Gains()


@pytest.fixture
def report_line():
    """Record one acceptance verdict line; printed again in the terminal summary."""

    def _emit(criterion: int, passed: bool, text: str) -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
