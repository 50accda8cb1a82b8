"""Per-criterion summary for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, title)`` are grouped by ``n``; a
criterion passes when every test carrying its number passes. Runtimes come
from the ``runtime`` user property each acceptance test records.
"""

from collections import defaultdict

import pytest

_RESULTS = defaultdict(lambda: {"title": "", "outcomes": [], "runtime": 0.0})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS[number]
    entry["title"] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        entry["outcomes"].append(report.passed)
        entry["runtime"] += dict(item.user_properties).get("runtime", 0.0)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["outcomes"] and all(entry["outcomes"]) else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {number:>2}: {entry['title']} ({entry['runtime']:.2f} s)")
