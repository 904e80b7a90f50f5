"""Collects acceptance outcomes and prints one line per criterion at the end."""
import pytest

_outcomes: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n = mark.args[0]
    ok, notes = _outcomes.setdefault(n, [True, []])
    _outcomes[n][0] = ok and rep.passed
    notes.extend(str(v) for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        ok, notes = _outcomes[n]
        line = f"ACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}"
        if notes:
            line += "  " + "; ".join(notes)
        terminalreporter.write_line(line)
