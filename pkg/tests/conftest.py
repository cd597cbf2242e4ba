import pytest

VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record a criterion line, then fail the test if the criterion did not hold."""
    def record(number: int, ok: bool, detail: str):
        VERDICTS[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, VERDICTS[number]
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
