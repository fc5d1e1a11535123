import numpy as np
import pytest

from coresieve.config import RunConfig
from coresieve.datagen import DiscreteWorld


@pytest.fixture
def reference_world():
    """Two atoms, two classes, clean label = atom index."""
    T1 = [[0.8, 0.2], [0.3, 0.7]]
    T2 = [[0.9, 0.1], [0.4, 0.6]]
    return DiscreteWorld([[0.0], [1.0]], [0.5, 0.5], [[1.0, 0.0], [0.0, 1.0]], [T1, T2])


@pytest.fixture
def small_cfg():
    """Quick config: 600 samples, 20 epochs, sieve from epoch 8."""
    return RunConfig.from_dict({
        "data": {"num_samples": 600, "num_test": 300, "dim": 10, "separation": 5.0},
        "model": {"hidden": 32},
        "optimizer": {"epochs": 20},
        "schedule": {"warmup_epochs": 2, "ramp_epochs": 6, "split_epoch": 12},
    })


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(LINES):
        terminalreporter.write_line(LINES[number])
