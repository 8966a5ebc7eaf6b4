import os
from pathlib import Path

import numpy as np
import pytest

from sotmlp import dataset, trainer
from sotmlp.network import MNIST_TOPOLOGY

ROOT = Path(__file__).resolve().parents[1]
MNIST_DIR = Path(os.environ.get("SOTMLP_MNIST_DIR", ROOT / "data" / "mnist"))


def _have_mnist():
    try:
        for stem in dataset.MNIST_FILES.values():
            dataset.resolve(MNIST_DIR, stem)
    except FileNotFoundError:
        return False
    return True


@pytest.fixture(scope="session")
def mnist():
    if not _have_mnist():
        pytest.skip(f"MNIST files not found in {MNIST_DIR} (run scripts/fetch_mnist.sh)")
    x_train, y_train = dataset.load_mnist(MNIST_DIR, "train")
    x_test, y_test = dataset.load_mnist(MNIST_DIR, "test")
    return x_train, y_train, x_test, y_test


@pytest.fixture(scope="session")
def trained(mnist):
    """The 784x16x10 reference run: 10 epochs, seed 0, delta_b = 0."""
    x_train, y_train, x_test, y_test = mnist
    config = trainer.TrainConfig(epochs=10, rng_seed=0, delta_b=0.0)
    return trainer.train(MNIST_TOPOLOGY, x_train, y_train, config, x_test, y_test)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
