import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)")
_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = _CRITERION.search(item.name)
    if not m:
        return
    n = int(m.group(1))
    detail = dict(item.user_properties).get("detail", "")
    if report.when == "call":
        _results[n] = ("PASS" if report.passed else "FAIL", detail)
    elif report.failed:
        _results[n] = ("FAIL", detail or f"{report.when} error")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, detail = _results[n]
        terminalreporter.write_line(f"criterion {n}: {status}" + (f" | {detail}" if detail else ""))
