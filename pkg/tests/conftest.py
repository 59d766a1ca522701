"""Shared pytest hooks.

Acceptance checks register a one-line verdict in ``ACCEPTANCE``; the lines
are echoed in the terminal summary so they survive output capturing.
"""

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
