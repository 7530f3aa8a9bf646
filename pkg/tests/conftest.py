from __future__ import annotations

import re

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(re.match(r"\d+", s.split()[1]).group()), s)):
        terminalreporter.write_line(line)
