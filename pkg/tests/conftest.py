import pytest

from sphere_hierarchy.backends import get_backend
from sphere_hierarchy.polynomial import parse_polynomial

EQ2_TEXT = "(x1+x2+x3)^2"
PROP1_TEXT = "(x1+x2+x3)^2 + 1/2*(x1^2+x2^2+x3^2)"

_ACCEPTANCE = {}


@pytest.fixture
def eq2():
    return parse_polynomial(EQ2_TEXT, 3)


@pytest.fixture
def prop1():
    return parse_polynomial(PROP1_TEXT, 3)


@pytest.fixture
def backend():
    return get_backend("cvxopt")


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        key = (number, title)
        prev = _ACCEPTANCE.get(key, "PASS")
        status = "PASS" if report.outcome == "passed" and prev == "PASS" else (
            "SKIP" if report.outcome == "skipped" and prev == "PASS" else "FAIL")
        _ACCEPTANCE[key] = status


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
