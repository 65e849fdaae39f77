"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import pytest

_results: dict[str, list[bool]] = {}


def pytest_runtest_logreport(report):
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if not marker:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results.setdefault(marker, []).append(report.outcome == "passed")


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark:
        item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcomes in _results.items():
        terminalreporter.write_line(f"{'PASS' if all(outcomes) else 'FAIL'}  {name}")
