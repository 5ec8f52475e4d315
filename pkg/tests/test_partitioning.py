"""Tests for head/tail partitioning and imbalance profiling."""

import numpy as np
import pytest

from src.errors import InvalidArgument, NoTailClasses
from src.linalg_core import SampleMatrix
from src.partitioning import imbalance_factor, partition_head_tail, semantic_scale_profile

CIFAR10_LT = {0: 5000, 1: 2997, 2: 1796, 3: 1077, 4: 645, 5: 387, 6: 232, 7: 139, 8: 83, 9: 50}


# ============================================================
# partition_head_tail
# ============================================================

def test_single_step_partition():
    """Should put the small class in the tail."""
    p = partition_head_tail({0: 95, 1: 5})
    assert p.h == 1
    assert p.h_r == pytest.approx(0.95)
    assert p.head == [0] and p.tail == [1]


def test_exponential_ten_class_partition():
    """Should split a 10-class exponential profile at the 90% threshold."""
    p = partition_head_tail(CIFAR10_LT)
    assert p.h == 5
    assert p.h_r == pytest.approx(0.92818, abs=1e-5)
    assert p.tail == [5, 6, 7, 8, 9]
    assert p.ordered_classes == list(range(10))


def test_partition_ignores_input_order(rng):
    """Should give the same partition however the counts map is ordered."""
    items = list(CIFAR10_LT.items())
    expected = partition_head_tail(CIFAR10_LT)
    for _ in range(5):
        shuffled = dict(items[i] for i in rng.permutation(len(items)))
        assert partition_head_tail(shuffled) == expected


def test_threshold_is_strict():
    """Head coverage must exceed the threshold strictly."""
    with pytest.raises(NoTailClasses):
        partition_head_tail({0: 90, 1: 10})


def test_equal_counts_break_ties_by_class_id():
    """Should order equal counts by class id."""
    p = partition_head_tail({3: 40, 1: 40, 2: 40, 0: 1}, threshold=0.5)
    assert p.ordered_classes == [1, 2, 3, 0]
    assert p.head == [1, 2]


def test_head_and_tail_partition_all_classes():
    """Head and tail should be disjoint and cover all classes."""
    p = partition_head_tail(CIFAR10_LT, threshold=0.7)
    assert sorted(p.head + p.tail) == sorted(CIFAR10_LT)
    assert not set(p.head) & set(p.tail)


@pytest.mark.parametrize(
    "counts,threshold",
    [({0: 10}, 0.9), ({0: 10, 1: 0}, 0.9), ({0: 10, 1: 2}, 1.0), ({0: 10, 1: 2}, 0.0)],
)
def test_invalid_partition_inputs(counts, threshold):
    """Should reject a single class, zero counts and thresholds outside (0, 1)."""
    with pytest.raises(InvalidArgument):
        partition_head_tail(counts, threshold)


# ============================================================
# imbalance_factor
# ============================================================

def test_imbalance_factor():
    """Should divide the largest count by the smallest."""
    assert imbalance_factor(CIFAR10_LT) == 100.0
    assert imbalance_factor({0: 7, 1: 7}) == 1.0
    assert imbalance_factor({0: 5000, 1: 500}) == 10.0


# ============================================================
# semantic_scale_profile
# ============================================================

def test_identical_classes_rank_by_id(rng):
    """Identical classes rank by id."""
    x = rng.standard_normal((3, 40))
    profile = semantic_scale_profile({4: SampleMatrix(x), 2: SampleMatrix(x)}, threads=1)
    assert profile.semantic_scales[2] == profile.semantic_scales[4]
    assert profile.scale_ranking == [2, 4]


def test_wider_class_has_larger_volume():
    """Should rank a class with twice the spread higher in 99 of 100 draws."""
    correct = 0
    for seed in range(100):
        noise = np.random.default_rng(seed).standard_normal((2, 4, 200))
        profile = semantic_scale_profile({0: SampleMatrix(noise[0]), 1: SampleMatrix(2.0 * noise[1])}, threads=1)
        correct += profile.semantic_scales[1] > profile.semantic_scales[0]
    assert correct >= 99


def test_single_class_profile(rng):
    """Should profile a single class."""
    profile = semantic_scale_profile({7: SampleMatrix(rng.standard_normal((2, 9)))})
    assert profile.scale_ranking == [7]
    assert profile.imbalance_factor == 1.0
    assert profile.counts == {7: 9}
