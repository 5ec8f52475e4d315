"""Targeted-FDG selection of augmented samples.

Pipeline per tail class:
1. generate a candidate pool larger than the quota
2. split the pool into k subsets with k-means (k-means++ seeding)
3. greedily add whole subsets, each step taking the subset whose
   addition gives the largest (or smallest) FDG
4. trim the last subset so exactly ``quota`` samples remain

``fdg_sweep`` repeats this (or plain stochastic generation) many times
and keeps a rank-uniform spread of augmented sets ordered by FDG_Tail.
"""

from operator import attrgetter
from typing import Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple, TypeVar

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from src.augmenters import AugmentedSet, AugmenterSpec, balance_plan, run_augmenter
from src.embeddings import EmbeddingSet
from src.errors import FdgError, InsufficientPool, InvalidArgument, TooFewSamples
from src.fdg_metrics import base_volume, fdg, fdg_tail
from src.linalg_core import SampleMatrix, center, manifold_volume, scatter_log2det
from src.parallel import parallel_map
from src.partitioning import ClassPartition

logger = structlog.get_logger(__name__)

Direction = Literal["maximize", "minimize"]

KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 100

T = TypeVar("T")


# ============================================================
# Models
# ============================================================

class ClusterSet(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    sizes: List[int]
    iterations: int
    inertia: float

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster_id)


class SelectionPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    direction: Direction
    picked: List[int]
    quota: int
    achieved_fdg: float
    step_fdgs: List[float]
    step_directions: List[Direction]
    switch_at: Optional[int] = None
    selected_indices: List[int]
    trimmed_indices: List[int]


class SweepEntry(BaseModel):
    """One augmented dataset of a sweep: per-class sets plus FDG_Tail."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    run: int
    seed: int
    setting: str
    fdg: float
    per_class_fdg: Dict[int, float]
    sets: Dict[int, AugmentedSet]


class SweepResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sets: List[SweepEntry]
    mode: Literal["stochastic", "greedy"]
    generated: int


# ============================================================
# k-means
# ============================================================

def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    min_sq = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(min_sq.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=min_sq / total))
        else:
            # every point coincides with a centre already
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(remaining[rng.integers(len(remaining))])
        chosen.append(idx)
        min_sq = np.minimum(min_sq, np.sum((x - x[idx]) ** 2, axis=1))
    return x[chosen].copy()


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(x ** 2, axis=1)[:, None]
        - 2.0 * x @ centroids.T
        + np.sum(centroids ** 2, axis=1)[None, :]
    )
    return np.argmin(np.maximum(sq, 0.0), axis=1)


def _repair_empty(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> int:
    """Give each empty cluster the point farthest from its own centroid."""
    repaired = 0
    sizes = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(sizes == 0):
        dist = np.sum((x - centroids[labels]) ** 2, axis=1)
        dist[sizes[labels] <= 1] = -1.0
        i = int(np.argmax(dist))
        sizes[labels[i]] -= 1
        labels[i] = j
        sizes[j] = 1
        centroids[j] = x[i]
        repaired += 1
    return repaired


def _means(x: np.ndarray, labels: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    sizes = np.bincount(labels, minlength=k)
    return sums / sizes[:, None], sizes


def kmeans(pool: SampleMatrix, k: int, seed: int) -> ClusterSet:
    """Lloyd iterations from k-means++ seeding, with empty-cluster repair."""
    # distances are translation invariant; work relative to the pool mean
    origin = pool.mean()
    x = pool.samples - origin
    n = x.shape[0]
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    if n < k:
        raise TooFewSamples(f"{n} samples cannot form {k} clusters")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    repaired = 0
    iterations = 0
    for iterations in range(1, KMEANS_MAX_ITER + 1):
        labels = _assign(x, centroids)
        repaired += _repair_empty(x, labels, centroids, k)
        new_centroids, sizes = _means(x, labels, k)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < KMEANS_TOL:
            break

    inertia = float(np.sum((x - centroids[labels]) ** 2))
    if repaired:
        logger.warning("kmeans_empty_clusters_repaired", repaired=repaired, k=k)
    logger.debug("kmeans_converged", k=k, n=n, iterations=iterations, inertia=inertia)
    return ClusterSet(
        k=k,
        assignments=labels,
        centroids=centroids + origin,
        sizes=[int(s) for s in sizes],
        iterations=iterations,
        inertia=inertia,
    )


# ============================================================
# Greedy FDG-directed selection
# ============================================================

def _opposite(direction: Direction) -> Direction:
    return "minimize" if direction == "maximize" else "maximize"


def _better(value: float, best: Optional[float], direction: Direction) -> bool:
    if best is None:
        return True
    return value > best if direction == "maximize" else value < best


class _ScatterState:
    """Running sums of base + picked samples for incremental evaluation.

    All sums are taken over rows relative to the base mean.
    """

    def __init__(self, base: np.ndarray):
        self.origin = base.mean(axis=0)
        shifted = base - self.origin
        self.n = base.shape[0]
        self.total = shifted.sum(axis=0)
        self.scatter = shifted.T @ shifted

    def stats(self, rows: np.ndarray) -> Tuple[int, np.ndarray, np.ndarray]:
        shifted = rows - self.origin
        return len(rows), shifted.sum(axis=0), shifted.T @ shifted

    def volume_with(self, n: int, total: np.ndarray, scatter: np.ndarray) -> float:
        return 0.5 * scatter_log2det(self.n + n, self.total + total, self.scatter + scatter)

    def add(self, n: int, total: np.ndarray, scatter: np.ndarray) -> None:
        self.n += n
        self.total = self.total + total
        self.scatter = self.scatter + scatter


def greedy_select(
    base: SampleMatrix,
    clusters: ClusterSet,
    pool: SampleMatrix,
    quota: int,
    direction: Direction = "maximize",
    *,
    switch_at: Optional[int] = None,
    incremental: bool = False,
    class_id: int = -1,
) -> Tuple[AugmentedSet, SelectionPlan]:
    """Pick whole clusters by extreme FDG until ``quota`` is reached, then trim.

    With ``switch_at`` the direction flips once that many samples have
    been selected. The last cluster is trimmed by dropping the samples
    closest to the base mean (maximize) or farthest (minimize).
    """
    if quota < 0:
        raise InvalidArgument(f"quota must be >= 0, got {quota}")
    if pool.n < quota:
        raise InsufficientPool(f"pool of {pool.n} cannot fill quota {quota}", class_id=class_id)
    if pool.d != base.d:
        raise InvalidArgument(f"pool d={pool.d} differs from base d={base.d}")
    if clusters.assignments.shape[0] != pool.n:
        raise InvalidArgument("cluster assignments do not match the pool")

    v_base = base_volume(base)
    base_rows = base.samples
    pool_rows = pool.samples
    members = [clusters.members(j) for j in range(clusters.k)]
    remaining = [j for j in range(clusters.k) if len(members[j])]

    state = None
    if incremental:
        state = _ScatterState(base_rows)
        stats = {j: state.stats(pool_rows[members[j]]) for j in remaining}

    picked: List[int] = []
    step_fdgs: List[float] = []
    step_directions: List[Direction] = []
    selected: List[np.ndarray] = []
    total = 0
    active: Direction = direction

    while total < quota:
        active = direction if switch_at is None or total < switch_at else _opposite(direction)
        best_j, best_val = None, None
        chosen = np.concatenate(selected) if selected else np.zeros(0, dtype=np.int64)
        for j in remaining:
            if state is not None:
                v_joint = state.volume_with(*stats[j])
            else:
                joint = np.concatenate([base_rows, pool_rows[chosen], pool_rows[members[j]]], axis=0)
                v_joint = manifold_volume(center(SampleMatrix.from_samples(joint)))
            gain = (v_joint - v_base) / v_base
            if _better(gain, best_val, active):
                best_j, best_val = j, gain
        picked.append(best_j)
        step_fdgs.append(float(best_val))
        step_directions.append(active)
        selected.append(members[best_j])
        remaining.remove(best_j)
        total += len(members[best_j])
        if state is not None:
            state.add(*stats[best_j])
        logger.debug("greedy_step", class_id=class_id, cluster=best_j, fdg=best_val, direction=active, total=total)

    trimmed = np.zeros(0, dtype=np.int64)
    excess = total - quota
    if excess > 0:
        last = selected[-1]
        dist = np.linalg.norm(pool_rows[last] - base_rows.mean(axis=0), axis=1)
        order = np.argsort(dist, kind="stable")
        drop_pos = order[:excess] if active == "maximize" else order[::-1][:excess]
        keep_mask = np.ones(len(last), dtype=bool)
        keep_mask[drop_pos] = False
        trimmed = last[~keep_mask]
        selected[-1] = last[keep_mask]

    indices = np.concatenate(selected) if selected else np.zeros(0, dtype=np.int64)
    samples = pool_rows[indices]
    aug_matrix = SampleMatrix.from_samples(samples) if len(indices) else None
    achieved = fdg(base, aug_matrix).fdg

    plan = SelectionPlan(
        direction=direction,
        picked=[int(j) for j in picked],
        quota=quota,
        achieved_fdg=achieved,
        step_fdgs=step_fdgs,
        step_directions=step_directions,
        switch_at=switch_at,
        selected_indices=[int(i) for i in indices],
        trimmed_indices=[int(i) for i in trimmed],
    )
    aug = AugmentedSet(
        class_id=class_id,
        samples=samples.reshape(len(indices), pool.d),
        method="greedy_select",
        parameters={"direction": direction, "switch_at": switch_at, "k": clusters.k},
        fdg=achieved,
    )
    logger.debug("greedy_selected", class_id=class_id, direction=direction, steps=len(picked), fdg=achieved)
    return aug, plan


class CandidatePool(BaseModel):
    """One tail class's oversized candidate pool, clustered once."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    class_id: int
    base: SampleMatrix
    pool: SampleMatrix
    clusters: ClusterSet
    quota: int


def build_candidate_pools(
    dataset: EmbeddingSet,
    augmenter: AugmenterSpec,
    partition: ClassPartition,
    seed: int,
    *,
    k: int = 500,
    pool_multiplier: float = 3.0,
    quotas: Optional[Mapping[int, int]] = None,
    threads: Optional[int] = None,
) -> Dict[int, CandidatePool]:
    """Generate ceil(quota * pool_multiplier) candidates per tail class and cluster them.

    k is clamped to the pool size. Classes with an empty pool are left out.
    """
    quota = dict(balance_plan(dataset.counts()).quota)
    if quotas:
        quota.update(quotas)
    generated = run_augmenter(augmenter, dataset, partition, seed, quotas=quotas,
                              multiplier=pool_multiplier, threads=threads)

    def one(class_id: int) -> Optional[CandidatePool]:
        pool = generated[class_id].matrix()
        if pool is None:
            return None
        k_c = min(k, pool.n)
        if k_c < k:
            logger.warning("kmeans_k_clamped", class_id=class_id, requested=k, used=k_c)
        try:
            clusters = kmeans(pool, k_c, seed)
        except FdgError as e:
            raise e.annotate(class_id)
        return CandidatePool(class_id=class_id, base=dataset.class_matrix(class_id),
                             pool=pool, clusters=clusters, quota=quota.get(class_id, 0))

    tail = sorted(partition.tail)
    pools = {c: p for c, p in zip(tail, parallel_map(one, tail, threads)) if p is not None}
    logger.info("candidate_pools_built", classes=len(pools), pool_multiplier=pool_multiplier, k=k)
    return pools


def select_tail(
    pools: Mapping[int, CandidatePool],
    direction: Direction = "maximize",
    *,
    switch_fraction: Optional[float] = None,
    incremental: bool = False,
) -> Dict[int, Tuple[AugmentedSet, SelectionPlan]]:
    """Run greedy_select on every pool.

    ``switch_fraction`` t flips the direction after round(t * quota)
    samples of each class.
    """
    out = {}
    for class_id in sorted(pools):
        p = pools[class_id]
        switch_at = None if switch_fraction is None else int(round(switch_fraction * p.quota))
        try:
            out[class_id] = greedy_select(p.base, p.clusters, p.pool, p.quota, direction,
                                          switch_at=switch_at, incremental=incremental, class_id=class_id)
        except FdgError as e:
            raise e.annotate(class_id)
    return out


# ============================================================
# Sweeps
# ============================================================

def _rank_indices(n: int, m_keep: int) -> List[int]:
    if m_keep == 1:
        return [(n - 1) // 2]
    # round(i * (n - 1) / (m_keep - 1)), halves rounded up, in integers
    return [(2 * i * (n - 1) + (m_keep - 1)) // (2 * (m_keep - 1)) for i in range(m_keep)]


def _value_indices(values: Sequence[float], m_keep: int) -> List[int]:
    lo, hi = values[0], values[-1]
    if m_keep == 1:
        return [(len(values) - 1) // 2]
    used: set = set()
    for i in range(m_keep):
        target = lo + i * (hi - lo) / (m_keep - 1)
        best = min(
            (j for j in range(len(values)) if j not in used),
            key=lambda j: (abs(values[j] - target), j),
        )
        used.add(best)
    return sorted(used)


def uniform_subsample_by_fdg(
    sets: Sequence[T],
    m_keep: int,
    *,
    by: Literal["rank", "value"] = "rank",
    key: Callable[[T], float] = attrgetter("fdg"),
) -> List[T]:
    """Sort by FDG and keep ``m_keep`` items spread uniformly.

    ``rank`` keeps ranks round(i (n-1)/(m_keep-1)), so both endpoints
    survive. ``value`` keeps the items nearest to evenly spaced FDG
    values (falls back to rank when all FDGs are equal).
    """
    n = len(sets)
    if not 1 <= m_keep <= n:
        raise InvalidArgument(f"need 1 <= m_keep <= {n}, got {m_keep}")
    ordered = sorted(sets, key=key)
    values = [key(s) for s in ordered]
    if by == "value" and values[-1] > values[0]:
        picks = _value_indices(values, m_keep)
    elif by in ("rank", "value"):
        picks = _rank_indices(n, m_keep)
    else:
        raise InvalidArgument(f"unknown subsample strategy {by!r}")
    return [ordered[i] for i in picks]


def _entry(run: int, seed: int, setting: str, sets: Dict[int, AugmentedSet], report) -> SweepEntry:
    per_class = {c: r.fdg for c, r in report.per_class.items()}
    sets = {c: s.with_fdg(per_class[c]) for c, s in sets.items() if c in per_class}
    return SweepEntry(run=run, seed=seed, setting=setting, fdg=report.fdg_tail,
                      per_class_fdg=per_class, sets=sets)


def fdg_sweep(
    dataset: EmbeddingSet,
    augmenter: AugmenterSpec,
    partition: ClassPartition,
    mode: Literal["stochastic", "greedy"] = "stochastic",
    m_generate: int = 100,
    m_keep: int = 50,
    seed: int = 0,
    *,
    k: int = 500,
    pool_multiplier: float = 3.0,
    subsample: Literal["rank", "value"] = "rank",
    incremental: bool = False,
    quotas: Optional[Mapping[int, int]] = None,
    threads: Optional[int] = None,
) -> SweepResult:
    """Generate ``m_generate`` augmented datasets and keep ``m_keep`` by FDG_Tail.

    stochastic: run the augmenter with seeds seed, seed+1, ...
    greedy: one candidate pool per tail class, clustered once; each run
    selects with maximize for the first fraction t of the quota and
    minimize afterwards, t evenly spaced over [0, 1].
    """
    if m_generate < 1 or not 1 <= m_keep <= m_generate:
        raise InvalidArgument(f"need 1 <= m_keep <= m_generate, got {m_keep}, {m_generate}")
    base_by_class = {c: dataset.class_matrix(c) for c in partition.tail}

    if mode == "stochastic":
        def run_one(run: int) -> SweepEntry:
            run_seed = seed + run
            sets = run_augmenter(augmenter, dataset, partition, run_seed, quotas=quotas, threads=1)
            report = fdg_tail(base_by_class, {c: s.matrix() for c, s in sets.items() if s.n}, partition, threads=1)
            logger.debug("sweep_run", mode=mode, run=run, fdg_tail=report.fdg_tail)
            return _entry(run, run_seed, "stochastic", sets, report)

        entries = parallel_map(run_one, range(m_generate), threads)

    elif mode == "greedy":
        pools = build_candidate_pools(dataset, augmenter, partition, seed, k=k,
                                      pool_multiplier=pool_multiplier, quotas=quotas, threads=threads)

        def run_one(run: int) -> SweepEntry:
            t = run / (m_generate - 1) if m_generate > 1 else 1.0
            selected = select_tail(pools, "maximize", switch_fraction=t, incremental=incremental)
            sets = {c: aug for c, (aug, _) in selected.items()}
            report = fdg_tail(base_by_class, {c: s.matrix() for c, s in sets.items() if s.n}, partition, threads=1)
            logger.debug("sweep_run", mode=mode, run=run, fdg_tail=report.fdg_tail)
            return _entry(run, seed, f"maximize_fraction={t:.4f}", sets, report)

        entries = parallel_map(run_one, range(m_generate), threads)

    else:
        raise InvalidArgument(f"unknown sweep mode {mode!r}")

    entries = sorted(entries, key=lambda e: (e.fdg, e.run))
    kept = uniform_subsample_by_fdg(entries, m_keep, by=subsample)
    logger.info(
        "sweep_complete",
        mode=mode,
        generated=len(entries),
        kept=len(kept),
        fdg_min=kept[0].fdg,
        fdg_max=kept[-1].fdg,
    )
    return SweepResult(sets=kept, mode=mode, generated=len(entries))
