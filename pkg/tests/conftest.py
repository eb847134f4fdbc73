import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_criteria = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome == "failed":
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        prev = _criteria.get(crit)
        if prev is None or prev[0] == "PASS":
            _criteria[crit] = (status, dict(report.user_properties).get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_criteria, key=lambda c: int(c.split()[0])):
        status, detail = _criteria[crit]
        line = f"[{status}] criterion {crit}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
