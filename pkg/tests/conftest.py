"""Shared pytest wiring: surface the acceptance verdicts.

The acceptance tests record one (number, label, verdict) triple each;
printing from inside a test is swallowed by capture, so the summary is
emitted here instead, after capture has ended.
"""
import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    verdicts = getattr(mod, "VERDICTS", None) if mod else None
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, verdict in sorted(verdicts):
        terminalreporter.write_line(f"criterion {number:02d} {label}: {verdict}")
