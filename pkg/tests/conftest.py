import os

import pytest
from hypothesis import HealthCheck, settings

from siriette.datagen import GenSpec, generate
from siriette.engine import Engine

settings.register_profile(
    "repo", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture(scope="session")
def tpch():
    """Generated SF 0.01 tables (seed 0)."""
    return generate(GenSpec(seed=0, scale=0.01))


@pytest.fixture(scope="session")
def tpch_small():
    return generate(GenSpec(seed=0, scale=0.001))


@pytest.fixture()
def tpch_engine(tpch):
    e = Engine()
    for t in tpch.values():
        e.load_table(t)
    return e


# one summary line per acceptance criterion

_criteria: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _criteria.setdefault(marker.args[0], {"failed": [], "ran": 0, "notes": []})
    if report.when == "call":
        entry["ran"] += 1
        entry["notes"] += [f"{k}: {v}" for k, v in item.user_properties if k in ("detail", "warning")]
    if report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, e in _criteria.items():
        warned = any(n.startswith("warning") for n in e["notes"])
        status = "FAIL" if e["failed"] else "WARN" if warned else "PASS"
        line = f"{status} {name} ({e['ran']} check{'s' if e['ran'] != 1 else ''})"
        if e["failed"]:
            line += ": " + ", ".join(e["failed"])
        if e["notes"]:
            line += "; " + "; ".join(e["notes"])
        terminalreporter.write_line(line)
