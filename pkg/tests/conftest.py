"""Prints one PASS/FAIL line per acceptance criterion after the run."""

ACCEPTANCE_MODULE = "test_acceptance"

_results: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if ACCEPTANCE_MODULE in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _results[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _results.items():
        terminalreporter.write_line(f"{outcome}  {name}")
