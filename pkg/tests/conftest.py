import numpy as np
import pytest

from builders import synthetic_set

from evodag.search.config import Config, SearchConfig
from evodag.training.trainer import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def train_set():
    return synthetic_set(count=60, seed=0)


@pytest.fixture
def validation_set():
    return synthetic_set(count=30, seed=1)


@pytest.fixture
def quick_training():
    return TrainConfig(epochs=1, batch_size=10)


@pytest.fixture
def search_config(tmp_path, quick_training):
    """A tiny search writing into a temporary directory."""
    return Config(
        search=SearchConfig(
            population_size=3, max_evaluations=6, seed=0, checkpoint_interval=0, output_dir=str(tmp_path / "run")
        ),
        training=quick_training,
    )


@pytest.fixture(scope="session")
def ray_cluster():
    ray = pytest.importorskip("ray")
    ray.init(num_cpus=2, include_dashboard=False, log_to_driver=False)
    yield ray
    ray.shutdown()
