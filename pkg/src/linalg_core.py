"""Manifold volume of a sample set.

The volume of a d x N sample matrix X (one column per sample) is

    V(X) = 1/2 * log2 det(I + (1/N) X X^T)

measured in bits. The log-determinant goes through a Cholesky factor of
the regularized matrix, never a raw determinant, so it stays finite for
large d. By Sylvester's identity the same value can be computed on the
N x N Gram side; the cheaper side is picked automatically.

Centering is explicit: ``center`` mean-normalizes, ``manifold_volume``
checks the result is centered. Callers decide the normalization order.
"""

from typing import Literal, Optional

import numpy as np
import structlog
from scipy.linalg import LinAlgError, cho_factor

from src.errors import InvalidArgument, NonFiniteInput, NotCentered, NumericalFailure

logger = structlog.get_logger(__name__)

CENTER_TOL = 1e-9
ROUNDING_SLACK = 64

Side = Literal["covariance", "gram"]


class SampleMatrix:
    """Immutable d x N sample matrix; column j is sample j.

    ``centered`` is a checked flag: constructing a centered matrix whose
    per-dimension means are not within tolerance of zero raises NotCentered.
    """

    __slots__ = ("_values", "centered")

    def __init__(self, values, centered: bool = False, allow_empty: bool = False):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise InvalidArgument(f"sample matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise InvalidArgument("sample matrix needs d >= 1")
        if arr.shape[1] < 1 and not allow_empty:
            raise InvalidArgument("sample matrix needs N >= 1")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput("sample matrix contains NaN or Inf")
        if centered and arr.shape[1] > 0:
            _check_centered(arr)
        arr.setflags(write=False)
        self._values = arr
        self.centered = centered

    @classmethod
    def from_samples(cls, rows, **kwargs) -> "SampleMatrix":
        """Build from sample-major data (one row per sample)."""
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        return cls(arr.T, **kwargs)

    @classmethod
    def empty(cls, d: int) -> "SampleMatrix":
        return cls(np.zeros((d, 0)), allow_empty=True)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def d(self) -> int:
        return self._values.shape[0]

    @property
    def n(self) -> int:
        return self._values.shape[1]

    @property
    def samples(self) -> np.ndarray:
        """Sample-major view (N x d)."""
        return self._values.T

    def mean(self) -> np.ndarray:
        return self._values.mean(axis=1)

    def __repr__(self) -> str:
        return f"SampleMatrix(d={self.d}, n={self.n}, centered={self.centered})"


def _center_tolerance(arr: np.ndarray) -> float:
    # CENTER_TOL absolute; above it only the rounding error of a float64 mean
    scale = float(np.max(np.abs(arr))) if arr.size else 0.0
    return max(CENTER_TOL, ROUNDING_SLACK * np.finfo(np.float64).eps * scale)


def _check_centered(arr: np.ndarray) -> None:
    means = arr.mean(axis=1)
    worst = float(np.max(np.abs(means)))
    if worst > _center_tolerance(arr):
        raise NotCentered(f"per-dimension mean {worst:.3e} exceeds tolerance")


def center(m: SampleMatrix) -> SampleMatrix:
    """Subtract each dimension's mean. Shape is unchanged."""
    values = m.values
    if not np.all(np.isfinite(values)):
        raise NonFiniteInput("sample matrix contains NaN or Inf")
    centered = values - values.mean(axis=1, keepdims=True)
    # second pass removes the rounding left by a mean far from zero
    centered -= centered.mean(axis=1, keepdims=True)
    return SampleMatrix(centered, centered=True)


def _log2det_spd(a: np.ndarray) -> float:
    try:
        c, _ = cho_factor(a, lower=True, check_finite=False)
    except LinAlgError as e:
        logger.warning("cholesky_failed", size=a.shape[0], error=str(e))
        raise NumericalFailure(f"Cholesky factorization failed: {e}") from e
    diag = np.diag(c)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NumericalFailure("Cholesky factor has a non-positive diagonal")
    return float(2.0 * np.sum(np.log2(diag)))


def _regularized_log2det(x: np.ndarray, side: Optional[Side]) -> float:
    d, n = x.shape
    if n == 0:
        return 0.0
    if side is None:
        side = "covariance" if d <= n else "gram"
    if side == "covariance":
        a = np.eye(d) + (x @ x.T) / n
    elif side == "gram":
        a = np.eye(n) + (x.T @ x) / n
    else:
        raise InvalidArgument(f"unknown side {side!r}")
    return max(0.0, _log2det_spd(a))


def logdet_regularized_gram(m: SampleMatrix, *, side: Optional[Side] = None) -> float:
    """log2 det(I + (1/N) X X^T) on the covariance or Gram side.

    With ``side=None`` the d x d covariance side is used when d <= N,
    otherwise the N x N Gram side. Both agree up to rounding.
    """
    if not m.centered:
        _check_centered(m.values)
    return _regularized_log2det(m.values, side)


def scatter_log2det(n: int, total: np.ndarray, scatter: np.ndarray) -> float:
    """log2 det(I + C/n) from running sums, C the centered scatter.

    ``total`` is the column sum and ``scatter`` the raw second moment
    sum(x x^T) of n samples. Used by incremental greedy evaluation.
    """
    if n == 0:
        return 0.0
    centered_scatter = scatter - np.outer(total, total) / n
    centered_scatter = 0.5 * (centered_scatter + centered_scatter.T)
    a = np.eye(len(total)) + centered_scatter / n
    return max(0.0, _log2det_spd(a))


def manifold_volume(m: SampleMatrix, *, check_centered: bool = True) -> float:
    """V(X) = 1/2 log2 det(I + (1/N) X X^T), in bits.

    With ``check_centered=False`` the formula is evaluated on the matrix
    as given, without the centering assertion.
    """
    if check_centered and not m.centered:
        _check_centered(m.values)
    return 0.5 * _regularized_log2det(m.values, None)
