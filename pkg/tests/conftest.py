import pytest

ACCEPTANCE: list = []


@pytest.fixture
def record():
    """Store one acceptance line; printed in the terminal summary."""

    def _record(label: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
