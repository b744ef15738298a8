"""Collects the one-line acceptance verdicts and prints them at the end.

pytest captures stdout per test, so the acceptance tests push their
PASS/FAIL lines here and a terminal-summary section replays them after the
run, where they are visible regardless of capture settings.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
