"""Labeled embedding sets.

An ``EmbeddingSet`` is what the file formats carry: N samples of
dimension d, stored sample-major, each with a non-negative integer
label. Per-class views come out as d x N ``SampleMatrix`` objects.
"""

from typing import Dict, Iterable, List, Mapping

import numpy as np

from src.errors import DimensionMismatch, InvalidArgument, LabelCountMismatch, NonFiniteInput
from src.linalg_core import SampleMatrix


class EmbeddingSet:
    """N x d features with one label per row."""

    __slots__ = ("features", "labels", "has_labels")

    def __init__(self, features, labels=None, has_labels: bool = True):
        feats = np.array(features, dtype=np.float64, copy=True)
        if feats.ndim != 2:
            raise InvalidArgument(f"features must be N x d, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise NonFiniteInput("features contain NaN or Inf")
        if labels is None:
            labs = np.zeros(feats.shape[0], dtype=np.uint32)
            has_labels = False
        else:
            labs = np.asarray(labels)
            if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
                raise LabelCountMismatch(
                    f"{labs.shape[0] if labs.ndim == 1 else labs.size} labels for {feats.shape[0]} samples"
                )
            if labs.size and (np.any(labs < 0) or np.any(labs > np.iinfo(np.uint32).max)):
                raise InvalidArgument("labels must fit in an unsigned 32-bit integer")
            labs = labs.astype(np.uint32)
        feats.setflags(write=False)
        labs.setflags(write=False)
        self.features = feats
        self.labels = labs
        self.has_labels = has_labels

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_ids(self) -> List[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def counts(self) -> Dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(k) for c, k in zip(ids, counts)}

    def indices_of(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == class_id)

    def class_samples(self, class_id: int) -> np.ndarray:
        """Sample-major rows of one class."""
        return self.features[self.indices_of(class_id)]

    def class_matrix(self, class_id: int) -> SampleMatrix:
        return SampleMatrix.from_samples(self.class_samples(class_id))

    def by_class(self) -> Dict[int, SampleMatrix]:
        return {c: self.class_matrix(c) for c in self.class_ids()}

    def class_means(self, class_ids: Iterable[int] | None = None) -> Dict[int, np.ndarray]:
        ids = self.class_ids() if class_ids is None else list(class_ids)
        return {c: self.class_samples(c).mean(axis=0) for c in ids}

    def as_matrix(self) -> SampleMatrix:
        return SampleMatrix(self.features.T)

    @classmethod
    def concat(cls, parts: Iterable["EmbeddingSet"]) -> "EmbeddingSet":
        parts = list(parts)
        if not parts:
            raise InvalidArgument("nothing to concatenate")
        dims = {p.d for p in parts}
        if len(dims) != 1:
            raise DimensionMismatch(f"cannot concatenate sets of dimensions {sorted(dims)}")
        return cls(
            np.concatenate([p.features for p in parts], axis=0),
            np.concatenate([p.labels for p in parts]),
        )

    @classmethod
    def from_class_arrays(cls, arrays: Mapping[int, np.ndarray]) -> "EmbeddingSet":
        """Build from {class_id: N_c x d rows}, classes in ascending order."""
        ids = sorted(arrays)
        feats = [np.asarray(arrays[c], dtype=np.float64) for c in ids]
        labels = [np.full(f.shape[0], c, dtype=np.uint32) for c, f in zip(ids, feats)]
        return cls(np.concatenate(feats, axis=0), np.concatenate(labels))

    def __repr__(self) -> str:
        return f"EmbeddingSet(n={self.n}, d={self.d}, classes={len(self.class_ids())})"
