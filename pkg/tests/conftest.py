import pytest

_LINES = []


@pytest.fixture
def report_criterion():
    """Record one acceptance line; the session summary prints them all in order."""
    def record(number: int, name: str, passed: bool, detail: str = ""):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}" + (
            f": {detail}" if detail else "")
        _LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
