from pathlib import Path

import pytest

from sharpsearch.space import load_space

DATA = Path(__file__).resolve().parents[1] / "src" / "sharpsearch" / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def table1():
    return load_space(DATA / "table1.space")


@pytest.fixture(scope="session")
def table3():
    return load_space(DATA / "table3.space")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    results = item.config._criteria
    prev = results.get(number, (title, "PASS", 0.0))
    if report.when == "call" or report.failed:
        status = prev[1] if report.passed else "FAIL"
        results[number] = (title, status, prev[2] + report.duration)


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, secs = results[number]
        terminalreporter.write_line(f"{status} criterion {number:>2}: {title} ({secs:.2f} s)")
