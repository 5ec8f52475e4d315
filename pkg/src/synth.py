"""Synthetic long-tailed data and a nearest-centroid harness.

Each class is an isotropic Gaussian (its TRUE distribution). Training
data for tail classes is drawn only from a truncated, biased sub-region
of it (the OBSERVED distribution): samples within
``observed_fraction * scale * sqrt(d)`` of a sub-mean shifted away from
the nearest head class. Test data always comes from the true
distributions, with equal counts per class.

The inverted-U experiment balances the tail with three kinds of
augmentation and scores each with nearest-centroid balanced accuracy:

    low   jittered copies of observed tail samples
    mid   fresh samples from the true tail distribution
    high  true samples displaced toward the nearest head mean
"""

import math
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from src.augmenters import balance_plan, most_similar_head
from src.config import parse_model
from src.embeddings import EmbeddingSet
from src.errors import FdgError, InvalidConfig, MissingClass, NoTailClasses
from src.fdg_metrics import fdg_tail
from src.parallel import parallel_map
from src.partitioning import partition_head_tail

logger = structlog.get_logger(__name__)

Regime = Literal["low", "mid", "high"]
REGIMES: List[Regime] = ["low", "mid", "high"]

REJECTION_BATCH = 4096
REJECTION_MAX_BATCHES = 2000


# ============================================================
# Configs and reports
# ============================================================

class SynthConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    num_classes: int = Field(10, ge=2)
    dim: int = Field(2, ge=1)
    imbalance_factor: float = Field(100.0, ge=1.0)
    n_max: int = Field(1000, ge=2)
    profile: Literal["exp", "step"] = "exp"
    class_sep: float = Field(2.0, gt=0.0)
    scale: float = Field(1.0, gt=0.0)
    observed_fraction: float = Field(1.0, gt=0.0, le=1.0)
    bias: float = Field(2.0, ge=0.0)
    threshold: float = Field(0.9, gt=0.0, lt=1.0)
    n_test_per_class: int = Field(1000, ge=1)
    seed: int = Field(0, ge=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    synth: SynthConfig = Field(
        default_factory=lambda: SynthConfig(num_classes=3, dim=2, imbalance_factor=100.0,
                                            n_max=1000, observed_fraction=0.25)
    )
    seeds: int = Field(10, ge=1)
    low_jitter: float = Field(0.05, ge=0.0)
    high_displacement: float = Field(2.0, ge=0.0)


class SynthDataset(BaseModel):
    """Train/test split plus the ground-truth geometry it was drawn from."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    train: EmbeddingSet
    test: EmbeddingSet
    means: np.ndarray
    scale: float
    counts: Dict[int, int]
    tail_classes: List[int]


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    classes: List[int]
    per_class_accuracy: Dict[int, float]
    balanced_accuracy: float
    confusion: List[List[int]]


class ExperimentRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    regime: Regime
    seed: int
    fdg_tail: float
    balanced_accuracy: float


class RegimeSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    regime: Regime
    mean_fdg_tail: float
    mean_balanced_accuracy: float


class ExperimentReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: List[ExperimentRow]
    summary: List[RegimeSummary]

    def by_seed(self) -> Dict[int, Dict[str, ExperimentRow]]:
        out: Dict[int, Dict[str, ExperimentRow]] = {}
        for row in self.rows:
            out.setdefault(row.seed, {})[row.regime] = row
        return out


class ImbalancePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    imbalance_factor: float
    regime: Regime
    mean_fdg_tail: float
    mean_balanced_accuracy: float


# ============================================================
# Generation
# ============================================================

def class_counts(config: SynthConfig) -> Dict[int, int]:
    """Per-class training counts for the configured profile."""
    c_max = config.num_classes - 1
    if config.profile == "exp":
        raw = [config.n_max * config.imbalance_factor ** (-c / c_max) for c in range(config.num_classes)]
    else:
        n_head = max(1, config.num_classes // 2)
        raw = [config.n_max if c < n_head else config.n_max / config.imbalance_factor
               for c in range(config.num_classes)]
    counts = {c: int(math.floor(x + 0.5)) for c, x in enumerate(raw)}
    if min(counts.values()) < 2:
        raise InvalidConfig(f"profile gives a class with fewer than 2 samples: {counts}")
    return counts


def class_means(config: SynthConfig) -> np.ndarray:
    """C x d means: one axis per class when d >= C, else a circle (or a line for d = 1)."""
    C, d, sep = config.num_classes, config.dim, config.class_sep
    means = np.zeros((C, d))
    if d >= C:
        means[np.arange(C), np.arange(C)] = sep
    elif d >= 2:
        angles = 2.0 * np.pi * np.arange(C) / C
        means[:, 0] = sep * np.cos(angles)
        means[:, 1] = sep * np.sin(angles)
    else:
        means[:, 0] = sep * np.arange(C)
    return means


def _truncated_draw(
    rng: np.random.Generator,
    mean: np.ndarray,
    scale: float,
    center: np.ndarray,
    radius: float,
    count: int,
) -> np.ndarray:
    d = mean.shape[0]
    kept: List[np.ndarray] = []
    total = 0
    for _ in range(REJECTION_MAX_BATCHES):
        batch = mean + scale * rng.standard_normal((REJECTION_BATCH, d))
        inside = batch[np.linalg.norm(batch - center, axis=1) <= radius]
        kept.append(inside)
        total += len(inside)
        if total >= count:
            return np.concatenate(kept)[:count]
    raise InvalidConfig(
        f"observed region (radius {radius:.3g}) too small to sample {count} points; "
        "raise observed_fraction or lower bias"
    )


def gen_longtail(config: SynthConfig) -> SynthDataset:
    """Long-tailed train set and class-balanced test set, all from ``config.seed``."""
    counts = class_counts(config)
    means = class_means(config)
    d, scale, f = config.dim, config.scale, config.observed_fraction

    try:
        partition = partition_head_tail(counts, config.threshold)
        head, tail = partition.head, partition.tail
    except NoTailClasses:
        head, tail = sorted(counts), []

    train: Dict[int, np.ndarray] = {}
    for c in sorted(counts):
        rng = np.random.default_rng([config.seed, 0, c])
        if c in tail and f < 1.0:
            nearest = most_similar_head(means[c], {h: means[h] for h in head})
            away = means[c] - means[nearest]
            norm = float(np.linalg.norm(away))
            u = away / norm if norm > 0 else np.eye(d)[0]
            sub_mean = means[c] + (1.0 - f) * config.bias * scale * u
            train[c] = _truncated_draw(rng, means[c], scale, sub_mean, f * scale * math.sqrt(d), counts[c])
        else:
            train[c] = means[c] + scale * rng.standard_normal((counts[c], d))

    test = {}
    for c in sorted(counts):
        rng = np.random.default_rng([config.seed, 1, c])
        test[c] = means[c] + scale * rng.standard_normal((config.n_test_per_class, d))

    logger.info("longtail_generated", classes=len(counts), dim=d, tail=len(tail),
                imbalance_factor=config.imbalance_factor, seed=config.seed)
    return SynthDataset(
        train=EmbeddingSet.from_class_arrays(train),
        test=EmbeddingSet.from_class_arrays(test),
        means=means,
        scale=scale,
        counts=counts,
        tail_classes=tail,
    )


# ============================================================
# Evaluation
# ============================================================

def nearest_centroid_eval(train: EmbeddingSet, test: EmbeddingSet) -> EvalReport:
    """Classify test samples by the nearest train-class centroid.

    Candidates are the train classes in ascending id order, so exact
    distance ties go to the smaller class id.
    """
    train_classes = train.class_ids()
    test_classes = test.class_ids()
    missing = sorted(set(test_classes) - set(train_classes))
    if missing:
        raise MissingClass(f"test classes {missing} have no training samples")

    centroids = np.stack([train.class_samples(c).mean(axis=0) for c in train_classes])
    x = test.features
    dist = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    predicted = np.asarray(train_classes)[np.argmin(dist, axis=1)]

    position = {c: i for i, c in enumerate(train_classes)}
    confusion = np.zeros((len(train_classes), len(train_classes)), dtype=np.int64)
    for true, pred in zip(test.labels, predicted):
        confusion[position[int(true)], position[int(pred)]] += 1

    per_class = {}
    for c in test_classes:
        row = confusion[position[c]]
        per_class[c] = float(row[position[c]] / row.sum())
    return EvalReport(
        classes=train_classes,
        per_class_accuracy=per_class,
        balanced_accuracy=float(np.mean(list(per_class.values()))),
        confusion=confusion.tolist(),
    )


# ============================================================
# Inverted-U experiment
# ============================================================

def _regime_samples(
    regime: Regime,
    data: SynthDataset,
    class_id: int,
    count: int,
    head: Sequence[int],
    config: ExperimentConfig,
    seed: int,
) -> np.ndarray:
    d = data.means.shape[1]
    mean = data.means[class_id]
    if regime == "low":
        rng = np.random.default_rng([seed, 2, class_id])
        observed = data.train.class_samples(class_id)
        picks = rng.integers(0, len(observed), size=count)
        return observed[picks] + config.low_jitter * data.scale * rng.standard_normal((count, d))

    # mid and high share the same true-distribution draw
    rng = np.random.default_rng([seed, 3, class_id])
    samples = mean + data.scale * rng.standard_normal((count, d))
    if regime == "high":
        nearest = most_similar_head(mean, {h: data.means[h] for h in head})
        samples = samples + config.high_displacement * (data.means[nearest] - mean)
    return samples


def _run_seed(config: ExperimentConfig, index: int) -> List[ExperimentRow]:
    synth = parse_model(SynthConfig, {**config.synth.model_dump(), "seed": config.synth.seed + index},
                        source="synth config")
    data = gen_longtail(synth)
    partition = partition_head_tail(data.train.counts(), synth.threshold)
    quota = balance_plan(data.train.counts()).quota
    base_by_class = {c: data.train.class_matrix(c) for c in partition.tail}

    rows = []
    for regime in REGIMES:
        augmented = {
            c: _regime_samples(regime, data, c, quota[c], partition.head, config, synth.seed)
            for c in partition.tail
            if quota[c] > 0
        }
        aug_set = EmbeddingSet.from_class_arrays(augmented)
        report = fdg_tail(base_by_class, {c: aug_set.class_matrix(c) for c in augmented}, partition, threads=1)
        balanced = EmbeddingSet.concat([data.train, aug_set])
        evaluation = nearest_centroid_eval(balanced, data.test)
        rows.append(ExperimentRow(regime=regime, seed=synth.seed, fdg_tail=report.fdg_tail,
                                  balanced_accuracy=evaluation.balanced_accuracy))
        logger.debug("experiment_regime", regime=regime, seed=synth.seed,
                     fdg_tail=report.fdg_tail, balanced_accuracy=evaluation.balanced_accuracy)
    return rows


def _summarize(rows: Sequence[ExperimentRow]) -> List[RegimeSummary]:
    summary = []
    for regime in REGIMES:
        picked = [r for r in rows if r.regime == regime]
        summary.append(RegimeSummary(
            regime=regime,
            mean_fdg_tail=float(np.mean([r.fdg_tail for r in picked])),
            mean_balanced_accuracy=float(np.mean([r.balanced_accuracy for r in picked])),
        ))
    return summary


def inverted_u_experiment(config: ExperimentConfig, *, threads: Optional[int] = None) -> ExperimentReport:
    """(FDG_Tail, balanced accuracy) per regime and seed.

    Seed i uses ``config.synth.seed + i``; seeds run in parallel but each
    run is deterministic on its own.
    """
    def one(index: int) -> List[ExperimentRow]:
        try:
            return _run_seed(config, index)
        except FdgError:
            logger.error("experiment_seed_failed", seed=config.synth.seed + index)
            raise

    per_seed = parallel_map(one, range(config.seeds), threads)
    rows = [row for seed_rows in per_seed for row in seed_rows]
    summary = _summarize(rows)
    logger.info(
        "experiment_complete",
        seeds=config.seeds,
        **{f"{s.regime}_accuracy": s.mean_balanced_accuracy for s in summary},
    )
    return ExperimentReport(rows=rows, summary=summary)


def imbalance_sweep(
    config: ExperimentConfig,
    factors: Sequence[float],
    *,
    threads: Optional[int] = None,
) -> List[ImbalancePoint]:
    """Regime means at each imbalance factor. Recorded, not asserted."""
    points = []
    for factor in factors:
        synth = {**config.synth.model_dump(), "imbalance_factor": float(factor)}
        run_config = parse_model(ExperimentConfig, {**config.model_dump(), "synth": synth},
                                 source="experiment config")
        report = inverted_u_experiment(run_config, threads=threads)
        for s in report.summary:
            points.append(ImbalancePoint(
                imbalance_factor=float(factor),
                regime=s.regime,
                mean_fdg_tail=s.mean_fdg_tail,
                mean_balanced_accuracy=s.mean_balanced_accuracy,
            ))
    logger.info("imbalance_sweep_complete", factors=list(factors))
    return points
