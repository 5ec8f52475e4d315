"""Feature Diversity Gain.

FDG measures the relative change in manifold volume when augmented
samples Z' join a class's base samples Z:

    F   = [Z, Z']            (raw columns, concatenated)
    FDG = (V(F) - V(Z)) / V(Z)

Z and F are each centered by their own mean before taking the volume.
Two properties hold for any valid input:
- no augmentation gives FDG = 0
- FDG >= -N'/(N + N'), with the bound approached when all augmented
  samples sit on one point
"""

from typing import Dict, Mapping, Optional

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from src.errors import DegenerateBase, DimensionMismatch, EmptyTail, FdgError, InvalidArgument
from src.linalg_core import SampleMatrix, center, manifold_volume
from src.parallel import parallel_map
from src.partitioning import ClassPartition

logger = structlog.get_logger(__name__)

DEGENERATE_VOLUME = 1e-9


class FdgResult(BaseModel):
    """Volumes and gain for one (base, augmentation) pair."""

    model_config = ConfigDict(frozen=True)

    v_base: float
    v_joint: float
    fdg: float
    lower_bound: float
    n_base: int
    n_aug: int


class TailFdgReport(BaseModel):
    """Per-class FDG over tail classes and their unweighted mean."""

    model_config = ConfigDict(frozen=True)

    per_class: Dict[int, FdgResult]
    fdg_tail: float


def fdg_lower_bound(n_base: int, n_aug: int) -> float:
    """-N'/(N + N')."""
    if n_base < 1 or n_aug < 0:
        raise InvalidArgument(f"need n_base >= 1 and n_aug >= 0, got ({n_base}, {n_aug})")
    return -n_aug / (n_base + n_aug)


def _joint(base: SampleMatrix, aug: Optional[SampleMatrix]) -> SampleMatrix:
    if aug is None or aug.n == 0:
        return SampleMatrix(base.values)
    return SampleMatrix(np.concatenate([base.values, aug.values], axis=1))


def _validate_pair(base: SampleMatrix, aug: Optional[SampleMatrix]) -> int:
    if aug is not None and aug.d != base.d:
        raise DimensionMismatch(f"base has d={base.d}, augmentation has d={aug.d}")
    if base.n < 2:
        raise DegenerateBase(f"base needs at least 2 samples, got {base.n}")
    return 0 if aug is None else aug.n


def base_volume(base: SampleMatrix) -> float:
    """V(Z) after centering; raises DegenerateBase when it is ~0."""
    v_base = manifold_volume(center(base))
    if v_base <= DEGENERATE_VOLUME:
        raise DegenerateBase(f"base volume {v_base:.3e} is degenerate")
    return v_base


def fdg(base: SampleMatrix, aug: Optional[SampleMatrix]) -> FdgResult:
    """FDG of ``aug`` relative to ``base``; ``aug=None`` means no samples."""
    n_aug = _validate_pair(base, aug)
    v_base = base_volume(base)
    v_joint = manifold_volume(center(_joint(base, aug)))
    gain = (v_joint - v_base) / v_base
    result = FdgResult(
        v_base=v_base,
        v_joint=v_joint,
        fdg=gain,
        lower_bound=fdg_lower_bound(base.n, n_aug),
        n_base=base.n,
        n_aug=n_aug,
    )
    logger.debug("fdg_computed", n_base=base.n, n_aug=n_aug, fdg=gain)
    return result


def fdg_delta_form(base: SampleMatrix, aug: Optional[SampleMatrix]) -> float:
    """FDG as log base delta of the determinant ratio, delta = det(I + ZZ^T/N).

    Natural logarithms throughout; the base cancels, so this must agree
    with ``fdg(...).fdg``.
    """
    _validate_pair(base, aug)
    z = center(base).values
    f = center(_joint(base, aug)).values
    _, logdet_z = np.linalg.slogdet(np.eye(base.d) + (z @ z.T) / z.shape[1])
    _, logdet_f = np.linalg.slogdet(np.eye(base.d) + (f @ f.T) / f.shape[1])
    if logdet_z <= 2.0 * np.log(2.0) * DEGENERATE_VOLUME:
        raise DegenerateBase("base determinant is degenerate")
    return float((logdet_f - logdet_z) / logdet_z)


def additive_volume_gain(base: SampleMatrix, aug: Optional[SampleMatrix]) -> float:
    """Relative gain if diversities simply added: V(Z') / V(Z).

    Diagnostic only. Unlike FDG it cannot go negative and ignores how far
    the augmented samples sit from the base.
    """
    n_aug = _validate_pair(base, aug)
    v_base = base_volume(base)
    if n_aug == 0:
        return 0.0
    return manifold_volume(center(aug)) / v_base


def fdg_tail(
    base_by_class: Mapping[int, SampleMatrix],
    aug_by_class: Mapping[int, SampleMatrix],
    partition: ClassPartition,
    *,
    threads: Optional[int] = None,
) -> TailFdgReport:
    """Mean FDG over the partition's tail classes.

    Classes missing from ``aug_by_class`` count as N' = 0.
    """
    tail = sorted(partition.tail)
    if not tail:
        raise EmptyTail("partition has no tail classes")
    missing = [c for c in tail if c not in base_by_class]
    if missing:
        raise InvalidArgument(f"tail classes {missing} have no base samples")

    def one(class_id: int) -> FdgResult:
        try:
            return fdg(base_by_class[class_id], aug_by_class.get(class_id))
        except FdgError as e:
            raise e.annotate(class_id)

    results = parallel_map(one, tail, threads)
    per_class = dict(zip(tail, results))
    mean = float(np.mean([r.fdg for r in results]))
    logger.info("fdg_tail_computed", tail_classes=len(tail), fdg_tail=mean)
    return TailFdgReport(per_class=per_class, fdg_tail=mean)
