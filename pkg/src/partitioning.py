"""Head/tail split, imbalance factor and semantic-scale profile.

Classes are sorted by descending count (ties by ascending class id) and
the first h form the head, h being the smallest prefix whose share of
all samples is strictly greater than the threshold (0.9 by default).
"""

from typing import Dict, List, Mapping

import structlog
from pydantic import BaseModel, ConfigDict

from src.errors import FdgError, InvalidArgument, NoTailClasses
from src.linalg_core import SampleMatrix, center, manifold_volume
from src.parallel import parallel_map

logger = structlog.get_logger(__name__)


class ClassPartition(BaseModel):
    model_config = ConfigDict(frozen=True)

    ordered_classes: List[int]
    h: int
    h_r: float
    head: List[int]
    tail: List[int]
    counts: Dict[int, int]
    threshold: float = 0.9


class ImbalanceProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    imbalance_factor: float
    semantic_scales: Dict[int, float]
    scale_ranking: List[int]
    counts: Dict[int, int]


def _validate_counts(counts: Mapping[int, int]) -> None:
    if not counts:
        raise InvalidArgument("counts must not be empty")
    bad = {c: n for c, n in counts.items() if n < 1}
    if bad:
        raise InvalidArgument(f"all counts must be >= 1, got {bad}")


def partition_head_tail(counts: Mapping[int, int], threshold: float = 0.9) -> ClassPartition:
    """Minimal-h head/tail partition."""
    _validate_counts(counts)
    if len(counts) < 2:
        raise InvalidArgument("need at least 2 classes to partition")
    if not 0.0 < threshold < 1.0:
        raise InvalidArgument(f"threshold must lie in (0, 1), got {threshold}")

    ordered = sorted(counts, key=lambda c: (-counts[c], c))
    total = sum(counts.values())
    cumulative = 0
    h = 0
    for class_id in ordered:
        cumulative += counts[class_id]
        h += 1
        if cumulative / total > threshold:
            break

    if h == len(ordered):
        raise NoTailClasses(
            f"head covers every class at threshold {threshold}; nothing left to augment"
        )

    partition = ClassPartition(
        ordered_classes=[int(c) for c in ordered],
        h=h,
        h_r=cumulative / total,
        head=sorted(int(c) for c in ordered[:h]),
        tail=sorted(int(c) for c in ordered[h:]),
        counts={int(c): int(n) for c, n in counts.items()},
        threshold=threshold,
    )
    logger.info("partition_built", h=partition.h, h_r=partition.h_r, tail=len(partition.tail))
    return partition


def imbalance_factor(counts: Mapping[int, int]) -> float:
    """Largest class count over smallest."""
    _validate_counts(counts)
    values = list(counts.values())
    return max(values) / min(values)


def semantic_scale_profile(sets: Mapping[int, SampleMatrix], *, threads=None) -> ImbalanceProfile:
    """Per-class manifold volume, ranked from least to most diverse."""
    if not sets:
        raise InvalidArgument("no classes to profile")
    class_ids = sorted(sets)

    def volume_of(class_id: int) -> float:
        try:
            return manifold_volume(center(sets[class_id]))
        except FdgError as e:
            raise e.annotate(class_id)

    volumes = dict(zip(class_ids, parallel_map(volume_of, class_ids, threads)))
    counts = {c: sets[c].n for c in class_ids}
    ranking = sorted(class_ids, key=lambda c: (volumes[c], c))
    profile = ImbalanceProfile(
        imbalance_factor=imbalance_factor(counts),
        semantic_scales=volumes,
        scale_ranking=ranking,
        counts=counts,
    )
    logger.info(
        "semantic_scale_profiled",
        classes=len(class_ids),
        imbalance_factor=profile.imbalance_factor,
        least_diverse=ranking[0],
    )
    return profile
