import numpy as np
import pytest

from posrgan.engine import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def tensor_factory(rng):
    """Random named tensors; every call draws fresh values from the test RNG."""
    counter = iter(range(10_000))

    def make(*shape, scale=1.0, name=None):
        return Tensor(rng.standard_normal(shape) * scale, name=name or f"t{next(counter)}")

    return make


_CRITERIA: list[tuple[str, str, float]] = []


def pytest_runtest_logreport(report):
    """Record the outcome of every test marked ``acceptance``."""
    marker = next((m for m in getattr(report, "acceptance_marks", ()) if m), None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA.append((marker, "PASS" if report.outcome == "passed" else "FAIL", report.duration))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.acceptance_marks = [m.args[0] for m in item.iter_markers("acceptance")]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, seconds in _CRITERIA:
        terminalreporter.write_line(f"{verdict} {name} ({seconds:.1f} s)")
