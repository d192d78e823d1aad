import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reidrank import EmbeddingMatrix, l2_normalize_rows


def make_matrix(rows, ids=None, normalize=True):
    rows = np.asarray(rows, dtype=np.float64)
    if ids is None:
        ids = tuple(f"r{i}" for i in range(rows.shape[0]))
    m = EmbeddingMatrix(rows, tuple(ids))
    return l2_normalize_rows(m) if normalize else m


def random_normalized(rng, n, d, prefix="r"):
    return l2_normalize_rows(
        EmbeddingMatrix(rng.standard_normal((n, d)), tuple(f"{prefix}{i}" for i in range(n)))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
