import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from knnpu.dataset import PUDataset, SparseBinaryMatrix  # noqa: E402


def make_dataset(dense, labels, ids=None) -> PUDataset:
    dense = np.asarray(dense, dtype=np.uint8)
    n, m = dense.shape
    ids = ids or [f"g{i}" for i in range(n)]
    return PUDataset(ids, np.asarray(labels, dtype=bool),
                     SparseBinaryMatrix.from_dense(dense), [f"f{j}" for j in range(m)])


def random_dataset(rng, n, m, density=0.3, n_pos=None) -> PUDataset:
    dense = (rng.random((n, m)) < density).astype(np.uint8)
    n_pos = n_pos if n_pos is not None else max(1, n // 5)
    labels = np.zeros(n, dtype=bool)
    labels[rng.permutation(n)[:n_pos]] = True
    return make_dataset(dense, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines, which are otherwise captured."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when == "call":
                lines += [l for l in rep.capstdout.splitlines() if l.startswith("ACCEPTANCE ")]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
