import re

import pytest

from squidsim.config import load_config

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results = {}


@pytest.fixture(scope="session")
def device_b():
    return load_config("deviceB.toml")


@pytest.fixture(scope="session")
def device_a():
    return load_config("deviceA.toml")


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _results[n] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, detail = _results[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
