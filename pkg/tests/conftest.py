import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""

    def _record(name: str, passed: bool, detail: str = "") -> None:
        _RESULTS.append((name, bool(passed), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _RESULTS:
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
