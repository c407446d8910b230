"""Per-criterion acceptance summary printed at the end of the run."""

from __future__ import annotations

import pytest

_criteria: dict[int, str] = {}
_owner: dict[str, int] = {}
_outcomes: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _criteria[number] = title
            _owner[item.nodeid] = number


def pytest_runtest_logreport(report):
    number = _owner.get(report.nodeid)
    if number is None:
        return
    if report.skipped:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        _outcomes.setdefault(number, []).append(("SKIP", reason.removeprefix("Skipped: ")))
    elif report.failed:
        _outcomes.setdefault(number, []).append(("FAIL", report.nodeid.split("::")[-1]))
    elif report.when == "call":
        _outcomes.setdefault(number, []).append(("PASS", ""))


def _verdict(results: list[tuple[str, str]]) -> tuple[str, str]:
    kinds = [k for k, _ in results]
    if "FAIL" in kinds:
        return "FAIL", "; ".join(d for k, d in results if k == "FAIL")
    if "PASS" in kinds:
        skipped = [d for k, d in results if k == "SKIP"]
        return "PASS", f"(partial: {'; '.join(skipped)})" if skipped else ""
    if kinds:
        return "SKIP", "; ".join(dict.fromkeys(d for _, d in results))
    return "NOT RUN", ""


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        verdict, detail = _verdict(_outcomes.get(number, []))
        line = f"AC-{number:02d} {verdict:<4} {_criteria[number]}"
        terminalreporter.write_line(f"{line}  {detail}".rstrip())
