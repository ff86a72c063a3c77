import numpy as np
import pytest

from core.autograd.Tensor import set_precision
from core.data.DataConfig import DataConfig
from core.model.Checkpoint import Checkpoint
from core.model.Encoder import Encoder
from core.model.ModelConfig import ModelConfig
from core.training.TrainConfig import TrainConfig


@pytest.fixture(autouse=True)
def reset_precision():
    set_precision("float32")
    yield
    set_precision("float32")


@pytest.fixture
def double():
    set_precision("float64")


@pytest.fixture
def tiny_config():
    return ModelConfig(n=3, layers=2, heads=2, hidden=8, mlp_ratio=2)


@pytest.fixture
def tiny_data():
    return DataConfig(n=3, r=1, p_mask=0.3)


@pytest.fixture
def encoder(double, tiny_config):
    return Encoder.init(tiny_config, seed=0)


@pytest.fixture
def checkpoint(encoder):
    return Checkpoint(encoder=encoder, step=0, train_config={"n": 3, "r": 1, "dist": "uniform", "p_mask": 0.3})


@pytest.fixture
def train_config(tiny_data):
    return TrainConfig(model=ModelConfig(n=3, layers=1, heads=2, hidden=8, mlp_ratio=2), data=tiny_data,
                       batch_size=4, steps=4, checkpoint_every=2, checkpoint_steps=(), precision="float64",
                       prefetch=2, log_every=0, quiet=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
