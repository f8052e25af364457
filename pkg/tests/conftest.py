"""Shared fixtures: cached MNIST IDX files and a cached trained MLP.

Both artifacts are expensive, so they live outside the pytest tmp tree
(SUBPGD_DATA_DIR or /tmp/subpgd-data, /tmp/subpgd-mlp.npz) and are reused
across runs. Delete those paths to force a refetch/retrain.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from subpgd import (Dataset, LinearClassifier, MlpClassifier, TrainConfig,
                    load_idx, load_model, save_model, train_sgd)

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.environ.get("SUBPGD_DATA_DIR", "/tmp/subpgd-data")
MODEL_CACHE = "/tmp/subpgd-mlp.npz"
IDX_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "val-images-idx3-ubyte", "val-labels-idx1-ubyte")


@pytest.fixture(scope="session")
def mnist_dir():
    if not all(os.path.exists(os.path.join(DATA_DIR, f)) for f in IDX_FILES):
        script = os.path.join(REPO, "scripts", "fetch_mnist.py")
        proc = subprocess.run([sys.executable, script, DATA_DIR],
                              capture_output=True, text=True)
        if proc.returncode != 0:
            pytest.fail(f"MNIST fetch failed:\n{proc.stdout}\n{proc.stderr}")
    return DATA_DIR


@pytest.fixture(scope="session")
def mnist(mnist_dir):
    train = load_idx(os.path.join(mnist_dir, IDX_FILES[0]),
                     os.path.join(mnist_dir, IDX_FILES[1]))
    val = load_idx(os.path.join(mnist_dir, IDX_FILES[2]),
                   os.path.join(mnist_dir, IDX_FILES[3]))
    return train, val


@pytest.fixture(scope="session")
def mnist_mlp(mnist):
    train, val = mnist
    if os.path.exists(MODEL_CACHE):
        model = load_model(MODEL_CACHE)
        if model.accuracy(val) >= 0.95:
            return model
    model = MlpClassifier.init([784, 256, 256, 10], seed=0)
    train_sgd(model, train, val,
              TrainConfig(lr=0.1, momentum=0.9, batch_size=128, epochs=30,
                          weight_decay=1e-4, seed=0))
    save_model(model, MODEL_CACHE)
    return model


@pytest.fixture(scope="session")
def linear_cloud():
    """Random hyperplane labeling a Gaussian cloud; margins span decades."""
    rng = np.random.default_rng(11)
    n = 256
    w = rng.standard_normal(n)
    x = np.clip(0.5 + 0.25 * rng.standard_normal((10000, n)), 0.0, 1.0)
    model = LinearClassifier(w=w, b=-0.5 * float(np.sum(w)))
    labels = (model.score(x) > 0).astype(int)
    return model, Dataset(inputs=x, labels=labels, num_classes=2)
