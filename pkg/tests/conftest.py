"""Collects one pass/fail line per acceptance criterion and prints them at the end of the run."""
from __future__ import annotations

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion implemented by a test")


@pytest.fixture
def detail(request):
    """Tests call ``detail("...")`` to attach measured numbers to their criterion line."""
    marker = request.node.get_closest_marker("criterion")
    notes: list[str] = []
    if marker is not None:
        _RESULTS.setdefault(marker.args[0], {"title": marker.args[1], "notes": [], "outcomes": []})
        notes = _RESULTS[marker.args[0]]["notes"]
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        entry = _RESULTS.setdefault(marker.args[0], {"title": marker.args[1], "notes": [], "outcomes": []})
        entry["outcomes"].append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        ok = bool(entry["outcomes"]) and all(o == "passed" for o in entry["outcomes"])
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {entry['title']}"
        if entry["notes"]:
            line += " [" + "; ".join(entry["notes"]) + "]"
        terminalreporter.write_line(line)
