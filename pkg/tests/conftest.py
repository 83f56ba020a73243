"""Shared test plumbing.

The acceptance tests register one human-readable line each; those lines
are replayed in a dedicated section at the end of the run so the verdict
per criterion is visible even when pytest captures stdout.
"""

import pytest

_acceptance_lines: list[tuple[int, str]] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Recorder: call with (criterion number, one summary line)."""

    def record(num: int, line: str) -> None:
        _acceptance_lines.append((num, line))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_acceptance_lines):
        terminalreporter.write_line(line)
