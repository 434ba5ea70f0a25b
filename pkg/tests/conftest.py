"""Shared pytest wiring.

The acceptance module (test_acceptance.py) holds one test per release
criterion. This plugin collects their outcomes and prints a single
PASS/FAIL line for each at the end of the run, so the verdict table is
readable without digging through the full test listing.
"""

import pytest

_acceptance_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance.py" not in str(item.fspath):
        return
    name = item.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_outcomes[name] = report.passed
    elif report.failed:
        # setup or teardown error counts as a failure of the criterion
        _acceptance_outcomes[name] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_acceptance_outcomes):
        verdict = "PASS" if _acceptance_outcomes[name] else "FAIL"
        terminalreporter.write_line("%s  %s" % (verdict, name))
