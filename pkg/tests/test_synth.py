"""Tests for synthetic long-tailed data and the nearest-centroid harness."""

import numpy as np
import pytest

from src.embeddings import EmbeddingSet
from src.errors import InvalidConfig, MissingClass
from src.synth import (
    ExperimentConfig,
    SynthConfig,
    class_counts,
    gen_longtail,
    imbalance_sweep,
    inverted_u_experiment,
    nearest_centroid_eval,
)


# ============================================================
# Counts and generation
# ============================================================

def test_balanced_profile():
    """Imbalance factor 1 gives equal counts."""
    cfg = SynthConfig(num_classes=4, imbalance_factor=1.0, n_max=50, n_test_per_class=5)
    assert class_counts(cfg) == {0: 50, 1: 50, 2: 50, 3: 50}
    data = gen_longtail(cfg)
    assert data.tail_classes == []
    assert data.train.counts() == {0: 50, 1: 50, 2: 50, 3: 50}


def test_exponential_profile_two_classes():
    """Should give n_max and n_max/IF for two classes."""
    assert class_counts(SynthConfig(num_classes=2, imbalance_factor=100.0, n_max=1000)) == {0: 1000, 1: 10}


def test_exponential_profile_ten_classes():
    """Should decay counts exponentially across ten classes."""
    counts = class_counts(SynthConfig(num_classes=10, imbalance_factor=100.0, n_max=5000))
    assert counts[0] == 5000 and counts[9] == 50
    assert all(counts[c] > counts[c + 1] for c in range(9))


def test_step_profile():
    """Should split classes into two count levels."""
    cfg = SynthConfig(num_classes=4, imbalance_factor=10.0, n_max=100, profile="step")
    assert class_counts(cfg) == {0: 100, 1: 100, 2: 10, 3: 10}


def test_too_small_tail_rejected():
    """Should reject a profile whose smallest class is too small."""
    with pytest.raises(InvalidConfig):
        gen_longtail(SynthConfig(num_classes=2, imbalance_factor=100.0, n_max=100))


def test_test_set_is_balanced():
    """Should draw the same number of test samples per class."""
    data = gen_longtail(SynthConfig(num_classes=3, imbalance_factor=20.0, n_max=200, n_test_per_class=37))
    assert data.test.counts() == {0: 37, 1: 37, 2: 37}


def test_generation_is_reproducible():
    """Same seed - same dataset."""
    cfg = SynthConfig(num_classes=3, imbalance_factor=100.0, n_max=1000, observed_fraction=0.25, seed=5)
    a, b = gen_longtail(cfg), gen_longtail(cfg)
    assert np.array_equal(a.train.features, b.train.features)
    assert np.array_equal(a.test.features, b.test.features)
    c = gen_longtail(cfg.model_copy(update={"seed": 6}))
    assert not np.array_equal(a.train.features, c.train.features)


def test_full_observed_fraction_matches_true_distribution():
    """Full observation should match the true class moments."""
    cfg = SynthConfig(num_classes=2, dim=3, imbalance_factor=10.0, n_max=20000, observed_fraction=1.0)
    data = gen_longtail(cfg)
    assert data.tail_classes == [1]
    tail = data.train.class_samples(1)
    assert np.allclose(tail.mean(axis=0), data.means[1], atol=0.1)
    assert np.allclose(tail.std(axis=0), cfg.scale, atol=0.1)


def test_truncated_tail_stays_in_observed_region():
    """Truncated tail samples stay inside the observed region, away from the head."""
    cfg = SynthConfig(num_classes=3, dim=2, imbalance_factor=100.0, n_max=1000, observed_fraction=0.25)
    data = gen_longtail(cfg)
    assert data.tail_classes == [1, 2]
    radius = 0.25 * cfg.scale * np.sqrt(2)
    for c in data.tail_classes:
        tail = data.train.class_samples(c)
        spread = np.linalg.norm(tail - tail.mean(axis=0), axis=1)
        assert spread.max() <= 2 * radius
        # biased away from the head class
        head_dist_true = np.linalg.norm(data.means[c] - data.means[0])
        head_dist_observed = np.linalg.norm(tail.mean(axis=0) - data.means[0])
        assert head_dist_observed > head_dist_true


# ============================================================
# nearest_centroid_eval
# ============================================================

def test_samples_at_centroids_are_perfect():
    """Samples at the centroids classify perfectly."""
    train = EmbeddingSet([[0.0, 0.0], [2.0, 0.0], [10.0, 0.0], [12.0, 0.0]], [0, 0, 1, 1])
    test = EmbeddingSet([[1.0, 0.0], [11.0, 0.0]], [0, 1])
    report = nearest_centroid_eval(train, test)
    assert report.balanced_accuracy == 1.0
    assert report.confusion == [[1, 0], [0, 1]]


def test_identical_centroids_go_to_smaller_id():
    """Should assign ties to the smaller class id."""
    train = EmbeddingSet([[1.0], [1.0]], [5, 2])
    test = EmbeddingSet([[0.0], [3.0]], [2, 5])
    report = nearest_centroid_eval(train, test)
    assert report.per_class_accuracy == {2: 1.0, 5: 0.0}


def test_separated_blobs_classify_well(rng):
    """Should classify well-separated blobs almost perfectly."""
    train = EmbeddingSet(np.vstack([rng.standard_normal((100, 2)), rng.standard_normal((100, 2)) + 10.0]),
                         [0] * 100 + [1] * 100)
    test = EmbeddingSet(np.vstack([rng.standard_normal((500, 2)), rng.standard_normal((500, 2)) + 10.0]),
                        [0] * 500 + [1] * 500)
    assert nearest_centroid_eval(train, test).balanced_accuracy > 0.99


def test_balanced_accuracy_is_mean_of_per_class():
    """Balanced accuracy should be the mean of per-class accuracy."""
    data = gen_longtail(SynthConfig(num_classes=4, imbalance_factor=10.0, n_max=200, class_sep=1.0,
                                    n_test_per_class=100))
    report = nearest_centroid_eval(data.train, data.test)
    assert 0.0 <= report.balanced_accuracy <= 1.0
    assert report.balanced_accuracy == pytest.approx(np.mean(list(report.per_class_accuracy.values())))


def test_missing_train_class():
    """Should raise MissingClass for a test class absent from training."""
    train = EmbeddingSet([[0.0], [1.0]], [0, 0])
    test = EmbeddingSet([[0.0], [1.0]], [0, 3])
    with pytest.raises(MissingClass):
        nearest_centroid_eval(train, test)


# ============================================================
# Experiments
# ============================================================

@pytest.fixture
def small_experiment():
    synth = SynthConfig(num_classes=3, dim=2, imbalance_factor=100.0, n_max=1000,
                        observed_fraction=0.25, n_test_per_class=300)
    return ExperimentConfig(synth=synth, seeds=2)


def test_inverted_u_rows_and_regime_order(small_experiment):
    """Should order FDG low < mid < high with mid beating high on accuracy."""
    report = inverted_u_experiment(small_experiment, threads=1)
    assert len(report.rows) == 6
    assert [s.regime for s in report.summary] == ["low", "mid", "high"]
    for rows in report.by_seed().values():
        assert rows["low"].fdg_tail < rows["mid"].fdg_tail < rows["high"].fdg_tail
        assert rows["mid"].balanced_accuracy > rows["high"].balanced_accuracy


def test_inverted_u_is_deterministic(small_experiment):
    """Same config gives the same report for any thread count."""
    a = inverted_u_experiment(small_experiment, threads=1)
    b = inverted_u_experiment(small_experiment, threads=2)
    assert a.model_dump() == b.model_dump()


def test_imbalance_sweep_records_each_factor(small_experiment):
    """Should record one point per factor and regime."""
    cfg = small_experiment.model_copy(update={"seeds": 1})
    points = imbalance_sweep(cfg, [50.0, 100.0], threads=1)
    assert [(p.imbalance_factor, p.regime) for p in points] == [
        (50.0, "low"), (50.0, "mid"), (50.0, "high"),
        (100.0, "low"), (100.0, "mid"), (100.0, "high"),
    ]


@pytest.mark.parametrize("factor", [0.5, 0.0, -10.0])
def test_imbalance_sweep_rejects_factor_below_one(small_experiment, factor):
    """Should raise InvalidConfig before running anything when a factor is below 1."""
    with pytest.raises(InvalidConfig):
        imbalance_sweep(small_experiment, [factor], threads=1)
