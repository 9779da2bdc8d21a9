from __future__ import annotations

import pytest

# criterion number -> (title, detail lines); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    n, title = mark.args
    entry = ACCEPTANCE.setdefault(n, {"details": []})
    entry.update(title=title, passed=report.passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[n]
        status = "PASS" if entry.get("passed") else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2} {status}: {entry['title']}")
        for line in entry["details"]:
            terminalreporter.write_line(f"    {line}")
