import pytest

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by a test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    slot = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "seen": False})
    if report.failed:
        slot["ok"] = False
    if report.when == "call":
        slot["seen"] = True


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        slot = _ACCEPTANCE[number]
        verdict = "PASS" if slot["ok"] and slot["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {slot['title']}")
