"""Shared pytest hooks: echo the acceptance-criterion verdict lines into the
terminal summary so they are visible in a normal `pytest -v` run."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = next(
        (m for name, m in sys.modules.items()
         if name.rpartition(".")[2] == "test_acceptance" and m is not None),
        None,
    )
    lines = getattr(module, "VERDICTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
