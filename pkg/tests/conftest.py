import numpy as np
import pytest

from vinclusion.fields import AffineBoxField
from vinclusion.kernels import ConstantKernel
from vinclusion.operators import ProblemInstance
from vinclusion.timebase import Grid, Trajectory


def reference_instance(N=256, p=1.0, h=0.0):
    """Scalar F(t, x) = [x - 1, x + 1], k = 1, constant h, T = 1."""
    g = Grid(1.0, N)
    return ProblemInstance(ConstantKernel(1.0), AffineBoxField(1.0, 0.0, 1.0), Trajectory.constant(g, h), p)


@pytest.fixture
def ref():
    return reference_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, whatever the capture mode."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
