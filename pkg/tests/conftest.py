import numpy as np
import pytest

from rlprune import dataio, fixtures

MINI_FIXTURES = ("vgg-mini", "res-mini", "incep-mini", "se-mini")


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small shapes dataset shared across tests (400/100/100 samples)."""
    d = tmp_path_factory.mktemp("data")
    dataio.generate_dataset(d, classes=10, train=400, reward=100, test=100,
                            seed=0)
    return dataio.load_dataset(d)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data_dir")
    dataio.generate_dataset(d, classes=10, train=200, reward=100, test=100,
                            seed=1)
    return d


def make_mini(name, seed=0):
    return fixtures.make_fixture(name, classes=10, seed=seed)


@pytest.fixture(params=MINI_FIXTURES)
def mini_model(request):
    return make_mini(request.param)


def random_batch(shape, seed, n=2):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, (n,) + tuple(shape)).astype(np.float32)
