import pytest

_results: dict[str, list[str]] = {}
_labels: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, label): acceptance criterion test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            _labels.setdefault(mark.args[0], mark.args[1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _results.setdefault(mark.args[0], []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda c: int(c[1:]) if c[1:].isdigit() else 0
    for cid in sorted(_results, key=key):
        outcomes = _results[cid]
        status = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{cid} {status}  {_labels.get(cid, '')}")


