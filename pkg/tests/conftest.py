import numpy as np
import pytest

from moquad.synthdata import DatasetConfig, generate_dataset


@pytest.fixture(scope="session")
def small_cfg():
    return DatasetConfig(num_train=8, num_test=4, seed=3)


@pytest.fixture(scope="session")
def small_videos(small_cfg):
    return generate_dataset(small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_batch(rng, B, M, d):
    z = rng.normal(size=(B, M, d))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
