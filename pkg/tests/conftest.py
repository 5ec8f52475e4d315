"""Shared fixtures: small labeled embedding sets with a clear head and tail."""

import numpy as np
import pytest

from src.embeddings import EmbeddingSet
from src.partitioning import partition_head_tail


def make_longtail(counts, d=4, sep=6.0, seed=0):
    """Gaussian blobs, one per class, class c centred at sep * e_(c mod d)."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for c, n in counts.items():
        mean = np.zeros(d)
        mean[c % d] = sep * (1 + c // d)
        arrays[c] = mean + rng.standard_normal((n, d))
    return EmbeddingSet.from_class_arrays(arrays)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def longtail_set():
    """Head {0}, tail {1, 2}: counts 200 / 15 / 5 in d=4."""
    return make_longtail({0: 200, 1: 15, 2: 5})


@pytest.fixture
def longtail_partition(longtail_set):
    return partition_head_tail(longtail_set.counts())
