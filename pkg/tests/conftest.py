import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        _LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        print(_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
