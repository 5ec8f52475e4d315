"""Exception hierarchy for the FDG toolkit.

Every domain failure raised by the library is an ``FdgError``. The CLI
maps these to exit code 1; anything else is a bug.

Errors may carry the class they were raised for. Aggregating operations
(tail FDG, semantic-scale profiles, sweeps) call ``annotate`` so the
message names the offending class.
"""

from typing import Optional


class FdgError(Exception):
    """Base class for all domain errors."""

    def __init__(self, message: str, class_id: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.class_id = class_id

    def annotate(self, class_id: int) -> "FdgError":
        """Attach a class id (first annotation wins) and return self."""
        if self.class_id is None:
            self.class_id = class_id
        return self

    def __str__(self) -> str:
        if self.class_id is None:
            return self.message
        return f"class {self.class_id}: {self.message}"


class InvalidArgument(FdgError, ValueError):
    """A precondition on an argument was violated."""


# ============================================================
# linalg-core
# ============================================================

class NonFiniteInput(FdgError):
    """A sample matrix contains NaN or Inf."""


class NotCentered(FdgError):
    """A matrix expected to be mean-normalized is not."""


class NumericalFailure(FdgError):
    """The SPD factorization failed."""


class DimensionMismatch(FdgError):
    """Two sample sets disagree on the embedding dimension."""


# ============================================================
# fdg-metrics / partitioning
# ============================================================

class DegenerateBase(FdgError):
    """Base volume is (numerically) zero, so relative gain is undefined."""


class EmptyTail(FdgError):
    """The partition has no tail classes to aggregate over."""


class NoTailClasses(FdgError):
    """Every class landed in the head: the dataset is too balanced."""


# ============================================================
# augmenters
# ============================================================

class NoRelativeHead(FdgError):
    """No class exceeds kappa times the tail count."""


class ShapeMismatch(FdgError):
    """Patch-paste grids differ in shape or are not 2-D."""


class RegionOutOfBounds(FdgError):
    """A paste region does not fit inside the grid."""


class EmptyHead(FdgError):
    """No head class is available to pair with."""


class DegenerateDonor(FdgError):
    """The donor head class has zero variance in every dimension."""


# ============================================================
# selection / synth
# ============================================================

class TooFewSamples(FdgError):
    """Fewer samples than requested clusters."""


class InsufficientPool(FdgError):
    """The candidate pool cannot fill the quota."""


class InvalidConfig(FdgError):
    """A configuration document or model failed validation."""


class MissingClass(FdgError):
    """A test class has no training samples."""


# ============================================================
# cli-io
# ============================================================

class DatasetFormatError(FdgError):
    """Base class for embedding file format errors."""


class MalformedHeader(DatasetFormatError):
    pass


class TruncatedFile(DatasetFormatError):
    pass


class BadMagic(DatasetFormatError):
    pass


class LabelCountMismatch(DatasetFormatError):
    pass


class WriteFailed(FdgError):
    """An output file could not be created or replaced."""
