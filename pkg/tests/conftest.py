import sys

import numpy as np
import pytest

from qlb.fourier import FourierState


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def max_abs_diff(a: FourierState, b: FourierState) -> float:
    diff = (a - b).amps
    return float(np.abs(diff).max()) if diff.size else 0.0


def y_max_abs_diff(a, b) -> float:
    diff = (a - b).amps
    return float(np.abs(diff).max()) if diff.size else 0.0


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[number][1])
