import os
from pathlib import Path

import numpy as np
import pytest

from georeg.data import load_idx_dataset

MNIST_DIR = Path(os.environ.get("GEOREG_MNIST_DIR", "/root/data/mnist"))
TRAIN_FILES = ("train-images.idx3-ubyte", "train-labels.idx1-ubyte")
TEST_FILES = ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte")
# The training split used throughout: the first 50,000 training images.
TRAIN_LIMIT = 50000


def _mnist_path(name):
    for candidate in (MNIST_DIR / name, MNIST_DIR / (name + ".gz")):
        if candidate.exists():
            return candidate
    pytest.skip(f"MNIST file {name} not found under {MNIST_DIR} (set GEOREG_MNIST_DIR)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def mnist_paths():
    return {name: _mnist_path(name) for name in TRAIN_FILES + TEST_FILES}


@pytest.fixture(scope="session")
def mnist_train(mnist_paths):
    return load_idx_dataset(*(mnist_paths[n] for n in TRAIN_FILES), limit=TRAIN_LIMIT)


@pytest.fixture(scope="session")
def mnist_test(mnist_paths):
    return load_idx_dataset(*(mnist_paths[n] for n in TEST_FILES))


# One (status, criterion, detail) entry per acceptance criterion, printed at the end of the run.
ACCEPTANCE = []


@pytest.fixture
def criterion():
    def report(number, name, passed, detail="", hard=True):
        status = ("PASS" if passed else "FAIL") if hard else "INFO"
        line = f"{status} criterion {number}: {name}" + (f" ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[2].rstrip(":").rstrip("ab"))):
            terminalreporter.write_line(line)
