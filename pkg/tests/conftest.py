import numpy as np
import pytest

from tabvfm.data import CATEGORICAL, NUMERICAL, ColumnSpec, TableSchema


@pytest.fixture
def mixed_schema():
    return TableSchema((
        ColumnSpec("a", NUMERICAL),
        ColumnSpec("c", CATEGORICAL, ("x", "y", "z")),
        ColumnSpec("b", NUMERICAL),
        ColumnSpec("d", CATEGORICAL, ("no", "yes")),
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ------------------------------------------------------------

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "status": "PASS", "detail": ""})
    if report.skipped:
        entry["status"] = "SKIP"
        entry["detail"] = str(report.longrepr[-1]) if isinstance(report.longrepr, tuple) else ""
    elif report.failed:
        entry["status"] = "FAIL"
    if report.when == "call":
        entry["detail"] = dict(report.user_properties).get("detail", entry["detail"])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        line = f"criterion {number}: {e['status']:<4}  {e['title']}"
        if e["detail"]:
            line += f"  [{e['detail']}]"
        terminalreporter.write_line(line)
