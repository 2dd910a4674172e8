"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

import pytest

CRITERIA = {
    1: "equivalence lattice",
    2: "constraint and realness",
    3: "analytic covariance",
    4: "example 1 properties",
    5: "converted-measurement moments",
    6: "example 2 properties",
    7: "half-measurement identifiability",
    8: "DC-regularization invariance",
    9: "determinism across workers",
}

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    entry = _outcomes.setdefault(marker.args[0], {"failed": False, "details": []})
    if report.failed:
        entry["failed"] = True
    if report.when == "call":
        entry["details"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        entry = _outcomes.get(n)
        if entry is None:
            terminalreporter.write_line(f"criterion {n}: NOT RUN  {title}")
            continue
        verdict = "FAIL" if entry["failed"] else "PASS"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title}  {detail}".rstrip())
