import numpy as np
import pytest

from gazeprint.core import GazeTrace, ScreenGeometry

# acceptance bookkeeping: criterion number -> [description, passed so far]
_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marks = getattr(report, "criterion", None)
    if marks is None:
        return
    for number, text in marks:
        entry = _CRITERIA.setdefault(number, [text, True])
        entry[1] = entry[1] and report.passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marks = [m.args for m in item.iter_markers("criterion")]
    if marks:
        rep.criterion = marks


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, ok = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {text}")


@pytest.fixture
def geometry():
    return ScreenGeometry(1280, 720, 40.0)


def stationary_trace(segments, rate=60.0, jitter=0.0, seed=0):
    """Trace dwelling at each (x, y, seconds) segment in turn, no gaps."""
    rng = np.random.default_rng(seed)
    t, xs, ys = [], [], []
    clock = 0.0
    for x, y, secs in segments:
        n = int(round(secs * rate))
        for _ in range(n):
            t.append(clock)
            xs.append(x + rng.uniform(-jitter, jitter))
            ys.append(y + rng.uniform(-jitter, jitter))
            clock += 1.0 / rate
    return GazeTrace(np.array(t), np.array(xs), np.array(ys), np.ones(len(t), bool), rate)
