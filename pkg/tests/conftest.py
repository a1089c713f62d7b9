import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        # a failed setup or a later failed teardown overrides an earlier pass
        previous = _CRITERIA.get(number, ("PASS", title))[0]
        _CRITERIA[number] = ("FAIL" if failed or previous == "FAIL" else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")
