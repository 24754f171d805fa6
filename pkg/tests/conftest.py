import pytest

_REPORT: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one verdict line per acceptance criterion."""
    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _REPORT[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_REPORT):
        terminalreporter.write_line(_REPORT[number])
