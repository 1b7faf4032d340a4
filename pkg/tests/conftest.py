"""Prints the acceptance verdict lines after the test summary."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("tests.test_acceptance")
    if module is None or not module.VERDICTS:
        return
    terminalreporter.ensure_newline()
    for line in module.VERDICTS:
        terminalreporter.write_line(line)
