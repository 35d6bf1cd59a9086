from pathlib import Path

import pytest
from hypothesis import settings

from l2d.data import load_idx

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = ROOT / "data" / "mnist5k"
MNIST_IMAGES = MNIST_DIR / "images-idx3-ubyte.gz"
MNIST_LABELS = MNIST_DIR / "labels-idx1-ubyte.gz"

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def mnist():
    if not MNIST_IMAGES.exists():
        pytest.skip("MNIST subset missing; run scripts/make_mnist_idx.py")
    return load_idx(MNIST_IMAGES, MNIST_LABELS)


@pytest.fixture(scope="session")
def mnist_1k(mnist):
    return mnist.subset(slice(0, 5000, 5), "mnist-1k")
