"""Embedding file formats.

CSV
    header ``label,f0,f1,...,f{d-1}`` (or ``f0,...`` without labels),
    one row per sample, values rendered with 17 significant digits.

fdg-bin (little-endian)
    "FDGB" | version u8 = 1 | d u32 | N u64 | N x u32 labels |
    N*d x f64 values, sample-major

The format follows the file extension: ``.csv`` is CSV, anything else
is fdg-bin. Writes go to a temp file in the target directory and are
renamed into place.
"""

import csv
import io
import os
import struct
import tempfile
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import structlog

from src.embeddings import EmbeddingSet
from src.errors import (
    BadMagic,
    DatasetFormatError,
    FdgError,
    InvalidArgument,
    LabelCountMismatch,
    MalformedHeader,
    TruncatedFile,
    WriteFailed,
)

logger = structlog.get_logger(__name__)

Format = Literal["csv", "bin"]

MAGIC = b"FDGB"
VERSION = 1
HEADER = struct.Struct("<4sBIQ")


def atomic_write(path: Path | str, data: bytes) -> None:
    """Write ``data`` to ``path`` via a sibling temp file and os.replace.

    Raises:
        WriteFailed: the directory or file could not be created or replaced.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as e:
        raise WriteFailed(f"cannot write {path}: {e}") from e
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_path, path)
    except BaseException as e:
        try:
            os.remove(tmp_path)
        except OSError:
            pass
        if isinstance(e, OSError):
            raise WriteFailed(f"cannot write {path}: {e}") from e
        raise


def infer_format(path: Path | str) -> Format:
    return "csv" if Path(path).suffix.lower() == ".csv" else "bin"


# ============================================================
# fdg-bin
# ============================================================

def _decode_bin(data: bytes) -> EmbeddingSet:
    prefix = data[: len(MAGIC)]
    if prefix != MAGIC[: len(prefix)]:
        raise BadMagic(f"expected magic {MAGIC!r}, got {prefix!r}")
    if len(data) < HEADER.size:
        raise TruncatedFile(f"header needs {HEADER.size} bytes, file has {len(data)}")

    _, version, d, n = HEADER.unpack_from(data)
    if version != VERSION:
        raise BadMagic(f"unsupported fdg-bin version {version}")
    if d == 0:
        raise MalformedHeader("d must be >= 1")
    if n == 0:
        raise TruncatedFile("file holds no samples (N = 0)")

    expected = HEADER.size + 4 * n + 8 * d * n
    if len(data) < expected:
        raise TruncatedFile(f"expected {expected} bytes for d={d}, N={n}, got {len(data)}")
    if len(data) > expected:
        raise LabelCountMismatch(f"{len(data) - expected} trailing bytes after d={d}, N={n} payload")

    labels = np.frombuffer(data, dtype="<u4", count=n, offset=HEADER.size)
    values = np.frombuffer(data, dtype="<f8", count=d * n, offset=HEADER.size + 4 * n)
    return EmbeddingSet(values.reshape(n, d).astype(np.float64), labels.astype(np.uint32))


def _encode_bin(dataset: EmbeddingSet) -> bytes:
    header = HEADER.pack(MAGIC, VERSION, dataset.d, dataset.n)
    return (
        header
        + dataset.labels.astype("<u4").tobytes()
        + np.ascontiguousarray(dataset.features, dtype="<f8").tobytes()
    )


# ============================================================
# CSV
# ============================================================

def _parse_header(fields: List[str]) -> tuple[bool, int]:
    has_labels = bool(fields) and fields[0] == "label"
    feature_names = fields[1:] if has_labels else fields
    if not feature_names:
        raise MalformedHeader("header names no feature columns")
    for i, name in enumerate(feature_names):
        if name != f"f{i}":
            raise MalformedHeader(f"column {i + int(has_labels)} is {name!r}, expected 'f{i}'")
    return has_labels, len(feature_names)


def _decode_csv(text: str) -> EmbeddingSet:
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise MalformedHeader("file is empty")
    has_labels, d = _parse_header([f.strip() for f in rows[0]])
    body = rows[1:]
    if not body:
        raise TruncatedFile("file holds no samples (N = 0)")

    width = d + int(has_labels)
    features = np.empty((len(body), d))
    labels = np.zeros(len(body), dtype=np.int64)
    for line, row in enumerate(body, start=2):
        if len(row) != width:
            raise LabelCountMismatch(f"line {line}: {len(row)} fields, header has {width}")
        try:
            if has_labels:
                labels[line - 2] = int(row[0])
            features[line - 2] = [float(v) for v in row[int(has_labels):]]
        except ValueError as e:
            raise DatasetFormatError(f"line {line}: {e}") from e
    if np.any(labels < 0):
        raise DatasetFormatError("labels must be non-negative")
    return EmbeddingSet(features, labels if has_labels else None)


def _encode_csv(dataset: EmbeddingSet) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = [f"f{i}" for i in range(dataset.d)]
    writer.writerow(["label", *names] if dataset.has_labels else names)
    for label, row in zip(dataset.labels, dataset.features):
        values = [format(float(v), ".17g") for v in row]
        writer.writerow([str(int(label)), *values] if dataset.has_labels else values)
    return buf.getvalue().encode("utf-8")


# ============================================================
# Public API
# ============================================================

def read_embeddings(path: Path | str, fmt: Optional[Format] = None) -> EmbeddingSet:
    path = Path(path)
    fmt = fmt or infer_format(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise InvalidArgument(f"cannot read {path}: {e}") from e

    try:
        if fmt == "csv":
            try:
                text = data.decode("utf-8")
            except UnicodeDecodeError as e:
                raise MalformedHeader(f"not UTF-8: {e}") from e
            dataset = _decode_csv(text)
        else:
            dataset = _decode_bin(data)
    except FdgError as e:
        logger.warning("embeddings_read_failed", path=str(path), format=fmt, error=str(e))
        raise

    logger.info("embeddings_read", path=str(path), format=fmt, n=dataset.n, d=dataset.d)
    return dataset


def write_embeddings(dataset: EmbeddingSet, path: Path | str, fmt: Optional[Format] = None) -> None:
    path = Path(path)
    fmt = fmt or infer_format(path)
    if dataset.n == 0:
        raise InvalidArgument("refusing to write an empty embedding set")
    payload = _encode_csv(dataset) if fmt == "csv" else _encode_bin(dataset)
    atomic_write(path, payload)
    logger.info("embeddings_written", path=str(path), format=fmt, n=dataset.n, d=dataset.d)
