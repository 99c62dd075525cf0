import numpy as np
import pytest

from sweepsense.datasets import BuildConfig, build_dataset
from sweepsense.trainer import TrainConfig, train


@pytest.fixture(scope="session")
def fullband_dataset():
    return build_dataset(BuildConfig(preset="fullband8", n_records=6000, seed=11))


@pytest.fixture(scope="session")
def fullband_model(fullband_dataset):
    """Small reference model trained on the full-band G=8 corpus."""
    model, _ = train(fullband_dataset, train_config=TrainConfig(max_epochs=15, seed=11))
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
