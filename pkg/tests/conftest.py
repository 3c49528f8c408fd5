import pytest

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    k, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _RESULTS[k] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        title, ok, detail = _RESULTS[k]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {k:2d} {title}: {detail}")
