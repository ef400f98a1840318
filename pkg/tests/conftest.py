import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from qkdad import deep_svdd, experiments, sim  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ts_model():
    """Default Deep SVDD model on 2000 normal 400-count windows."""
    profile = sim.SimProfile()
    train = experiments.training_set(experiments.TIMESTAMPS, 2000, profile, 400)
    return deep_svdd.train(train, deep_svdd.TrainConfig(seed=0), experiments.TIMESTAMPS)


@pytest.fixture(scope="session")
def config_model():
    profile = sim.SimProfile()
    train = experiments.training_set(experiments.RECORDS, 2000, profile)
    return deep_svdd.train(train, deep_svdd.TrainConfig(seed=0), experiments.RECORDS)
