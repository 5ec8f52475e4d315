"""Information augmentation for tail classes.

Four schemes, each a pure function of (inputs, parameters, seed):

| Kind              | Pairing                       | Sample                                  |
|-------------------|-------------------------------|-----------------------------------------|
| remix_mix         | relative head (> kappa * n_t) | lam * tail + (1 - lam) * head           |
| patch_paste       | background ~ class counts     | head grid with a tail patch pasted in   |
| variance_transfer | most similar head class       | N(tail mean, donor variance)            |
| feature_fusion    | most similar head class       | tail mean + (head sample - head mean)   |

Every augmented sample carries the tail class label. ``feature_fusion``
is a mean/residual stand-in for a learned specific/generic feature
decomposition; its provenance says so.
"""

import math
from typing import Any, Dict, List, Literal, Mapping, NamedTuple, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field

from src.embeddings import EmbeddingSet
from src.errors import (
    DegenerateDonor,
    DimensionMismatch,
    EmptyHead,
    FdgError,
    InvalidArgument,
    InvalidConfig,
    NoRelativeHead,
    RegionOutOfBounds,
    ShapeMismatch,
)
from src.linalg_core import SampleMatrix
from src.parallel import parallel_map
from src.partitioning import ClassPartition

logger = structlog.get_logger(__name__)

AugmenterKind = Literal["remix_mix", "patch_paste", "variance_transfer", "feature_fusion"]


# ============================================================
# Models
# ============================================================

class AugmenterSpec(BaseModel):
    """Which scheme to run and its parameters."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: AugmenterKind = "remix_mix"
    alpha: float = Field(1.0, gt=0.0)
    kappa: float = Field(3.0, ge=1.0)
    grid_shape: Optional[Tuple[int, int]] = None
    full_covariance: bool = False


class AugmentedSet(BaseModel):
    """Augmented samples (N' x d, sample-major) for one class, with provenance."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    class_id: int
    samples: np.ndarray
    method: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    fdg: Optional[float] = None

    @property
    def n(self) -> int:
        return int(self.samples.shape[0])

    def matrix(self) -> Optional[SampleMatrix]:
        """d x N' view, or None when empty."""
        if self.n == 0:
            return None
        return SampleMatrix.from_samples(self.samples)

    def with_fdg(self, value: float) -> "AugmentedSet":
        return self.model_copy(update={"fdg": value})


class BalancePlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    quota: Dict[int, int]


class PairingPlan(BaseModel):
    """(tail sample index, partner class id, partner sample index) triples.

    Indices are row indices into the dataset the plan was built from.
    """

    model_config = ConfigDict(frozen=True)

    pairs: List[Tuple[int, int, int]]
    rule: Literal["remix_3nt", "most_similar_head", "longtail_background"]


class LabeledSample(NamedTuple):
    values: np.ndarray
    label: int
    degenerate: bool = False


class PatchRegion(NamedTuple):
    top: int
    left: int
    height: int
    width: int


# ============================================================
# Planning
# ============================================================

def balance_plan(counts: Mapping[int, int]) -> BalancePlan:
    """Samples each class needs to reach the largest class count."""
    if not counts:
        raise InvalidArgument("counts must not be empty")
    max_count = max(counts.values())
    return BalancePlan(quota={int(c): int(max_count - n) for c, n in counts.items()})


def remix_pairs(
    dataset: EmbeddingSet,
    tail_class: int,
    kappa: float = 3.0,
    *,
    rng: np.random.Generator,
    n_pairs: Optional[int] = None,
) -> PairingPlan:
    """Pair tail samples with draws from the relative-head classes.

    A class is a relative head for tail t when its count exceeds
    kappa * n_t. Partners are drawn uniformly from the union of those
    classes. With ``n_pairs`` > n_t, tail samples are reused cyclically.
    """
    counts = dataset.counts()
    if tail_class not in counts:
        raise InvalidArgument(f"class {tail_class} is not in the dataset")
    n_t = counts[tail_class]
    heads = sorted(c for c, n in counts.items() if c != tail_class and n > kappa * n_t)
    if not heads:
        raise NoRelativeHead(f"no class exceeds {kappa} x {n_t} samples", class_id=tail_class)

    n_pairs = n_t if n_pairs is None else n_pairs
    tail_idx = dataset.indices_of(tail_class)
    union = np.concatenate([dataset.indices_of(c) for c in heads])
    picks = union[rng.integers(0, len(union), size=n_pairs)]
    pairs = [
        (int(tail_idx[i % n_t]), int(dataset.labels[p]), int(p))
        for i, p in enumerate(picks)
    ]
    return PairingPlan(pairs=pairs, rule="remix_3nt")


def cmo_background_pairs(
    dataset: EmbeddingSet,
    tail_class: int,
    n_pairs: int,
    *,
    rng: np.random.Generator,
) -> PairingPlan:
    """Foregrounds cycle through the tail; backgrounds come from the whole
    long-tailed set, so each class is drawn in proportion to its count."""
    tail_idx = dataset.indices_of(tail_class)
    if len(tail_idx) == 0:
        raise InvalidArgument(f"class {tail_class} is not in the dataset")
    picks = rng.integers(0, dataset.n, size=n_pairs)
    pairs = [
        (int(tail_idx[i % len(tail_idx)]), int(dataset.labels[p]), int(p))
        for i, p in enumerate(picks)
    ]
    return PairingPlan(pairs=pairs, rule="longtail_background")


def most_similar_head(tail_mean: np.ndarray, head_means: Mapping[int, np.ndarray]) -> int:
    """Head class whose mean is nearest (Euclidean); ties go to the smaller id."""
    if not head_means:
        raise EmptyHead("no head class to match against")
    tail_mean = np.asarray(tail_mean, dtype=np.float64)
    best_id, best_dist = None, math.inf
    for class_id in sorted(head_means):
        dist = float(np.linalg.norm(np.asarray(head_means[class_id]) - tail_mean))
        if dist < best_dist:
            best_id, best_dist = class_id, dist
    return int(best_id)


# ============================================================
# Sample-level operations
# ============================================================

def mix_interpolate(tail: np.ndarray, head: np.ndarray, lam: float, tail_label: int) -> LabeledSample:
    """lam * tail + (1 - lam) * head, labelled entirely as the tail class."""
    tail = np.asarray(tail, dtype=np.float64)
    head = np.asarray(head, dtype=np.float64)
    if tail.shape != head.shape:
        raise DimensionMismatch(f"tail shape {tail.shape} != head shape {head.shape}")
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgument(f"lambda must lie in [0, 1], got {lam}")
    return LabeledSample(lam * tail + (1.0 - lam) * head, int(tail_label))


def sample_region(shape: Tuple[int, int], rng: np.random.Generator, alpha: float = 1.0) -> PatchRegion:
    """CutMix box: area ratio about 1 - lam, lam ~ Beta(alpha, alpha), uniform centre."""
    height, width = shape
    lam = rng.beta(alpha, alpha)
    cut_ratio = np.sqrt(1.0 - lam)
    cut_h = int(height * cut_ratio)
    cut_w = int(width * cut_ratio)
    cy = int(rng.integers(height))
    cx = int(rng.integers(width))
    y1 = int(np.clip(cy - cut_h // 2, 0, height))
    y2 = int(np.clip(cy + cut_h // 2, 0, height))
    x1 = int(np.clip(cx - cut_w // 2, 0, width))
    x2 = int(np.clip(cx + cut_w // 2, 0, width))
    return PatchRegion(y1, x1, y2 - y1, x2 - x1)


def patch_paste(background: np.ndarray, foreground: np.ndarray, region: PatchRegion, label: int) -> LabeledSample:
    """Paste ``foreground[region]`` onto ``background``; label is the foreground's.

    An empty region returns the background unchanged, flagged degenerate.
    """
    background = np.asarray(background, dtype=np.float64)
    foreground = np.asarray(foreground, dtype=np.float64)
    if background.ndim not in (2, 3) or background.shape != foreground.shape:
        raise ShapeMismatch(
            f"need equal 2-D grids (optionally with channels), got {background.shape} and {foreground.shape}"
        )
    top, left, height, width = region
    grid_h, grid_w = background.shape[:2]
    if min(top, left, height, width) < 0 or top + height > grid_h or left + width > grid_w:
        raise RegionOutOfBounds(f"region {tuple(region)} outside {grid_h}x{grid_w} grid")

    out = background.copy()
    out[top:top + height, left:left + width] = foreground[top:top + height, left:left + width]
    degenerate = height * width == 0
    if degenerate:
        logger.warning("empty_patch_region", label=label)
    return LabeledSample(out, int(label), degenerate)


# ============================================================
# Set-level generators
# ============================================================

def _rows(x: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise InvalidArgument(f"{name} must be a non-empty N x d array")
    return arr


def variance_transfer(
    tail: np.ndarray,
    donor: np.ndarray,
    count: int,
    *,
    rng: np.random.Generator,
    full_covariance: bool = False,
    class_id: int = -1,
    seed: Optional[int] = None,
) -> AugmentedSet:
    """Draw ``count`` samples from N(tail mean, donor covariance).

    Diagonal covariance by default; ``full_covariance`` transfers the
    donor's whole covariance matrix.
    """
    tail = _rows(tail, "tail")
    donor = _rows(donor, "donor")
    if tail.shape[1] != donor.shape[1]:
        raise DimensionMismatch(f"tail d={tail.shape[1]}, donor d={donor.shape[1]}")
    if donor.shape[0] < 2:
        raise InvalidArgument("donor needs at least 2 samples")
    if count < 0:
        raise InvalidArgument(f"count must be >= 0, got {count}")

    variance = donor.var(axis=0, ddof=1)
    if np.all(variance == 0.0):
        raise DegenerateDonor("donor variance is zero in every dimension", class_id=class_id)

    mean = tail.mean(axis=0)
    d = tail.shape[1]
    if count == 0:
        samples = np.zeros((0, d))
    elif full_covariance:
        cov = np.atleast_2d(np.cov(donor, rowvar=False))
        samples = rng.multivariate_normal(mean, cov, size=count, method="eigh")
    else:
        samples = mean + rng.standard_normal((count, d)) * np.sqrt(variance)

    return AugmentedSet(
        class_id=class_id,
        samples=samples,
        method="variance_transfer",
        parameters={"full_covariance": full_covariance},
        seed=seed,
    )


def feature_fusion(
    tail: np.ndarray,
    head: np.ndarray,
    count: int,
    *,
    rng: np.random.Generator,
    class_id: int = -1,
    seed: Optional[int] = None,
) -> AugmentedSet:
    """Tail mean plus head residuals drawn with replacement."""
    tail = _rows(tail, "tail")
    head = _rows(head, "head")
    if tail.shape[1] != head.shape[1]:
        raise DimensionMismatch(f"tail d={tail.shape[1]}, head d={head.shape[1]}")
    if count < 0:
        raise InvalidArgument(f"count must be >= 0, got {count}")

    residuals = head - head.mean(axis=0)
    picks = rng.integers(0, head.shape[0], size=count)
    samples = tail.mean(axis=0) + residuals[picks]
    return AugmentedSet(
        class_id=class_id,
        samples=samples,
        method="feature_fusion",
        parameters={"decomposition": "mean_residual", "simplified": True},
        seed=seed,
    )


def _grid_shape(spec: AugmenterSpec, d: int) -> Tuple[int, int]:
    shape = spec.grid_shape or (1, d)
    if shape[0] * shape[1] != d:
        raise InvalidConfig(f"grid_shape {shape} does not hold d={d} values")
    return shape


def _augment_class(
    spec: AugmenterSpec,
    dataset: EmbeddingSet,
    partition: ClassPartition,
    class_id: int,
    count: int,
    seed: int,
) -> AugmentedSet:
    rng = np.random.default_rng([seed, class_id])
    features = dataset.features
    params = spec.model_dump()

    if spec.kind == "remix_mix":
        plan = remix_pairs(dataset, class_id, spec.kappa, rng=rng, n_pairs=count)
        tail_idx = np.array([p[0] for p in plan.pairs], dtype=np.int64)
        head_idx = np.array([p[2] for p in plan.pairs], dtype=np.int64)
        lams = rng.beta(spec.alpha, spec.alpha, size=count)[:, None]
        samples = lams * features[tail_idx] + (1.0 - lams) * features[head_idx]
        return AugmentedSet(class_id=class_id, samples=samples.reshape(count, dataset.d),
                            method=spec.kind, parameters=params, seed=seed)

    if spec.kind == "patch_paste":
        shape = _grid_shape(spec, dataset.d)
        plan = cmo_background_pairs(dataset, class_id, count, rng=rng)
        samples = np.zeros((count, dataset.d))
        degenerate = 0
        for i, (fg, _, bg) in enumerate(plan.pairs):
            region = sample_region(shape, rng, spec.alpha)
            pasted = patch_paste(features[bg].reshape(shape), features[fg].reshape(shape), region, class_id)
            samples[i] = pasted.values.reshape(-1)
            degenerate += pasted.degenerate
        return AugmentedSet(class_id=class_id, samples=samples, method=spec.kind,
                            parameters={**params, "degenerate_regions": degenerate}, seed=seed)

    tail_rows = dataset.class_samples(class_id)
    donor_id = most_similar_head(tail_rows.mean(axis=0), dataset.class_means(partition.head))
    donor_rows = dataset.class_samples(donor_id)
    if spec.kind == "variance_transfer":
        aug = variance_transfer(tail_rows, donor_rows, count, rng=rng,
                                full_covariance=spec.full_covariance, class_id=class_id, seed=seed)
    else:
        aug = feature_fusion(tail_rows, donor_rows, count, rng=rng, class_id=class_id, seed=seed)
    return aug.model_copy(update={"parameters": {**params, **aug.parameters, "donor_class": donor_id}})


def run_augmenter(
    spec: AugmenterSpec,
    dataset: EmbeddingSet,
    partition: ClassPartition,
    seed: int,
    *,
    quotas: Optional[Mapping[int, int]] = None,
    multiplier: float = 1.0,
    threads: Optional[int] = None,
) -> Dict[int, AugmentedSet]:
    """Augment every tail class up to its balance quota.

    ``quotas`` overrides the balance plan per class; ``multiplier`` scales
    the count (candidate pools for selection are generated larger than
    the quota). Class ``c`` draws from ``default_rng([seed, c])``.
    """
    quota = dict(balance_plan(dataset.counts()).quota)
    if quotas:
        quota.update(quotas)
    targets = {c: int(math.ceil(quota.get(c, 0) * multiplier)) for c in partition.tail}

    def one(class_id: int) -> AugmentedSet:
        try:
            return _augment_class(spec, dataset, partition, class_id, targets[class_id], seed)
        except FdgError as e:
            raise e.annotate(class_id)

    tail = sorted(targets)
    sets = dict(zip(tail, parallel_map(one, tail, threads)))
    logger.info(
        "augmentation_generated",
        kind=spec.kind,
        seed=seed,
        samples=sum(s.n for s in sets.values()),
        classes=len(sets),
    )
    return sets
