import pytest

ACCEPTANCE_LINES = []


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return line


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
