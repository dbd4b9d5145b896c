import numpy as np
import pytest

from cli.handler import Handler
from softsensor.DatasetService import DatasetService, DatasetSettings, SampleBatch
from softsensor.ExperimentService import ExperimentConfig, ExperimentService
from softsensor.Models import NetworkSizes
from softsensor.Optimizer import LrSchedule
from softsensor.config import Config

TINY_SIZES = NetworkSizes(shared=(5, 4), latent=(4, 3, 3), regressor=(4, 3, 1), generator=(2, 3, 3),
                          activation="tanh")


@pytest.fixture(autouse=True)
def fresh_singletons():
    """Every test starts from freshly read environment settings."""
    Config.reset()
    DatasetService._instance = None
    ExperimentService._instance = None
    Handler._instance = None
    yield
    Config.reset()
    DatasetService._instance = None
    ExperimentService._instance = None
    Handler._instance = None


def build_batch(rows: int = 4, width: int = 3, labelled=(0, 2), seed: int = 0) -> SampleBatch:
    rng = np.random.default_rng(seed)
    series = rng.standard_normal((rows + 1, width))
    mask = np.zeros(rows, dtype=bool)
    mask[list(labelled)] = True
    return SampleBatch(
        x_t=series[:-1].copy(),
        x_next=series[1:].copy(),
        y=rng.standard_normal(int(mask.sum())),
        mask=mask,
        rows=np.arange(rows),
    )


@pytest.fixture
def batch() -> SampleBatch:
    return build_batch()


@pytest.fixture
def tiny_sizes() -> NetworkSizes:
    return TINY_SIZES


@pytest.fixture
def tiny_config(tmp_path) -> ExperimentConfig:
    """A synthetic run that trains in well under a second per epoch."""
    return ExperimentConfig(
        dataset=DatasetSettings(name="synthetic", synthetic_rows=60, synthetic_variables=2, synthetic_seed=3),
        model="ssvaer",
        sizes=TINY_SIZES,
        schedule=LrSchedule(warmup_epochs=1, total_epochs=3),
        fraction=0.5,
        seed=0,
        batch_size=16,
        output_dir=str(tmp_path / "run"),
    )
