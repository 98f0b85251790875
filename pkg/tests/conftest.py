import os
import sys

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

sys.path.insert(0, os.path.dirname(__file__))

from emitter_assoc.config import ChanestConfig, DatasetConfig, DcnnConfig, ExperimentConfig, McmConfig, TrainConfig

_limits = threadpool_limits(1)

SMALL_CONV = ((8, 5), (8, 3), (8, 3), (8, 3))


def small_config(seed=0, snr_db=20.0, **train):
    """A quick experiment: short features, tiny networks."""
    return ExperimentConfig(
        seed=seed, snr_db=snr_db,
        chanest=ChanestConfig(cir_length=32, fft_size=64),
        dataset=DatasetConfig(snapshots_per_test=2, repeats=3),
        dcnn=DcnnConfig(conv_specs=SMALL_CONV, dense_width=16, in_length=64),
        mcm=McmConfig(conv_specs=SMALL_CONV, in_length=64),
        train=TrainConfig(batch_size=64, max_epochs=train.get("max_epochs", 3), patience=2),
    )


@pytest.fixture(scope="session")
def small_cfg():
    return small_config()


@pytest.fixture(scope="session")
def small_ds(small_cfg):
    from emitter_assoc.experiment import generate
    return generate(small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
