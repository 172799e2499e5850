import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    number = marker.args[0]
    failed = report.failed
    if report.when == "call" or failed:
        status = "FAIL" if failed or _CRITERIA.get(number, ("", "PASS"))[1] == "FAIL" else "PASS"
        _CRITERIA[number] = (item.name, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  ({name})")
