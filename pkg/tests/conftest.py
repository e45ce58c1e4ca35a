"""Shared pytest plumbing: the acceptance scoreboard.

Acceptance tests append one line per criterion to SCOREBOARD; printing
them from inside a test would be swallowed by capture, so they are
echoed after the run ends, pass or fail.
"""

SCOREBOARD = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if SCOREBOARD:
        terminalreporter.section("acceptance criteria")
        for line in SCOREBOARD:
            terminalreporter.write_line(line)
