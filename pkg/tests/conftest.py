
import numpy as np
import pytest

ACCEPTANCE_LINES = []


def record(number, title, ok, detail):
    """Log one acceptance criterion outcome; the summary prints them in order."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["python", "cython"])
def backend(request):
    if request.param == "cython":
        try:
            from infeasalm import _ckernels  # noqa: F401
        except ImportError:
            pytest.skip("compiled extension not built")
    return request.param


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
