# tests/conftest.py

import os

import numpy as np
import pytest

from packcool.config import EnvConfig, TrainConfig
from packcool.modules.networks import init_params, value_layer_sizes

RUN_SLOW = os.environ.get("PACKCOOL_RUN_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip_slow = pytest.mark.skip(reason="set PACKCOOL_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_env() -> EnvConfig:
    # 20-step episodes on a 10-node grid
    return EnvConfig(n_x=10, dx=0.1, dt=0.05, horizon_time=1.0, n_fourier=3)


@pytest.fixture
def small_train() -> TrainConfig:
    return TrainConfig(
        horizon=32,
        minibatch=16,
        epochs=2,
        hidden_sizes=[8, 8],
        total_steps=64,
        seeds=[0],
        checkpoint_every=1,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def make_value_net():
    def factory(n_x: int, seed: int = 0, hidden=(8, 8)):
        return init_params(value_layer_sizes(n_x, list(hidden)), seed=seed)
    return factory


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(
        "# tiny run\n"
        "n_x = 10\n"
        "dx = 0.1\n"
        "dt = 0.05\n"
        "horizon_time = 1.0\n"
        "n_fourier = 3\n"
        "horizon = 32\n"
        "minibatch = 16\n"
        "epochs = 1\n"
        "hidden_sizes = 8, 8\n",
        encoding="utf-8",
    )
    return path
