from __future__ import annotations

import pytest

_CRITERIA: dict = {}


@pytest.fixture
def record_criterion():
    """Store one summary line per acceptance criterion for the terminal report."""
    def record(number: int, title: str, passed: bool, detail: str) -> None:
        _CRITERIA[number] = (title, passed, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(
            f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
