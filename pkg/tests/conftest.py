import time

import pytest

from orthofd.cli import main

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    key = mark.args
    if report.when == "call" or (report.when == "setup" and report.failed):
        _outcomes[key] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_outcomes.items()):
        terminalreporter.write_line(f"criterion {number} {status}: {title}")


@pytest.fixture(scope="session")
def repro_dir(tmp_path_factory):
    """One full run of the synthetic scenarios; returns ``(out_dir, seconds)``."""
    out = tmp_path_factory.mktemp("repro_a")
    t0 = time.perf_counter()
    code = main(["repro", "--seed", "0", "--no-bench", "--out-dir", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    return out, elapsed
