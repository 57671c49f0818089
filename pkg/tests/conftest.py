import numpy as np
import pytest

from amdlab import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["python", "cython"])
def backend(request):
    """Run a test under each kernel backend that is importable."""
    if request.param == "cython" and not kernels.cython_available():
        pytest.skip("compiled kernels not built")
    prev = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES.values():
        terminalreporter.write_line(line)
