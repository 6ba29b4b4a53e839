"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    k = _criterion_of(report)
    if k is None:
        return
    prev = _OUTCOMES.get(k, "PASS")
    _OUTCOMES[k] = "PASS" if (prev == "PASS" and report.outcome == "passed") else \
        ("SKIP" if report.outcome == "skipped" and prev == "PASS" else "FAIL")


def _criterion_of(report):
    for key, val in report.user_properties:
        if key == "criterion":
            return val
    return None


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", int(m.args[0])))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_OUTCOMES):
        terminalreporter.write_line(f"criterion {k:2d}: {_OUTCOMES[k]}")
