import numpy as np
import pytest

from artifact.config import load_config
from artifact.model import build_model


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("cache")


@pytest.fixture(scope="session")
def cfg8():
    return load_config(None, {"vel.n": 8})


@pytest.fixture(scope="session")
def model8(cfg8, cache_dir):
    """Coarse model shared by the unit tests (8 nodes per axis)."""
    return build_model(cfg8, cache_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
