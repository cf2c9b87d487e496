import os

import pytest

from qneurons.harness import load_mnist_dir
from qneurons.offline_digits import build_offline_digits

# Real MNIST IDX files are used when this points at a directory holding
# them; otherwise tests fall back to the bundled handwritten-digits set.
MNIST_ENV = "QNEURONS_MNIST_DIR"


@pytest.fixture(scope="session")
def small_digits_dir(tmp_path_factory):
    """A small IDX dataset for fast harness/CLI tests."""
    d = tmp_path_factory.mktemp("digits_small")
    build_offline_digits(d, train_count=2500, test_count=800, seed=0)
    return d


@pytest.fixture(scope="session")
def small_digits_data(small_digits_dir):
    return load_mnist_dir(small_digits_dir)


@pytest.fixture(scope="session")
def desk_data(tmp_path_factory):
    """Desk-scale 10000/10000 split: real MNIST when available, otherwise
    the offline digits stand-in.  Returns (train, test, source_name)."""
    env_dir = os.environ.get(MNIST_ENV)
    if env_dir and os.path.isdir(env_dir):
        train, test = load_mnist_dir(env_dir)
        return train, test, f"MNIST ({env_dir})"
    d = tmp_path_factory.mktemp("digits_desk")
    build_offline_digits(d, train_count=10000, test_count=10000, seed=0)
    train, test = load_mnist_dir(d)
    return train, test, "offline handwritten-digits stand-in"
