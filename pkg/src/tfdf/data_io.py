"""Feature/label persistence, preprocessing and task assembly.

Labels are 1-based on disk ({1..C}) and 0-based in memory.
"""

from __future__ import annotations

import csv
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    LabelOutOfRange,
    LengthMismatch,
    MissingFile,
    NonFiniteValue,
    ParseError,
)

FORMATS = ("csv", "raw-f64")
SCHEMES = ("none", "zscore", "unit_l2", "zscore_then_unit_l2")
DEFAULT_SCHEME = "zscore_then_unit_l2"

_RAW_HEADER = struct.Struct("<QQ")


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_csv_rows(path):
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise ParseError(f"{path}: empty file", row=0, col=0)
    if not all(_is_number(c) for c in rows[0]):
        # single optional header line
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data", row=1, col=0)
    return rows


def _parse_csv_matrix(path):
    rows = _read_csv_rows(path)
    # line numbers below are data-row indices (0-based, header excluded)
    ncols = len(rows[0])
    out = np.empty((len(rows), ncols), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != ncols:
            raise ParseError(
                f"{path}: row {i} has {len(row)} columns, expected {ncols}", row=i, col=len(row)
            )
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: cannot parse {cell!r} at ({i}, {j})", row=i, col=j) from None
    return out


def _read_raw(path):
    data = Path(path).read_bytes()
    if len(data) < _RAW_HEADER.size:
        raise ParseError(f"{path}: truncated raw-f64 header", row=0, col=0)
    rows, cols = _RAW_HEADER.unpack_from(data)
    expected = _RAW_HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise ParseError(
            f"{path}: raw-f64 payload is {len(data)} bytes, header implies {expected}", row=0, col=0
        )
    arr = np.frombuffer(data, dtype="<f8", offset=_RAW_HEADER.size, count=rows * cols)
    return arr.reshape(rows, cols).astype(np.float64)


def check_finite(X, name="matrix"):
    bad = np.argwhere(~np.isfinite(X))
    if bad.size:
        r, c = (int(v) for v in bad[0])
        raise NonFiniteValue(f"{name}: non-finite value at ({r}, {c})", row=r, col=c)


def as_feature_matrix(X, name="features"):
    """Coerce to a validated float64 2-D array (rows >= 1, cols >= 1, finite)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"{name}: expected a non-empty 2-D matrix, got shape {X.shape}")
    check_finite(X, name)
    return X


def load_matrix(path, format="csv"):
    """Load a feature matrix from ``path``.

    ``format`` is ``"csv"`` (comma separated, optional header line) or
    ``"raw-f64"`` (little-endian u64 rows, u64 cols, row-major f64 payload).
    """
    if format not in FORMATS:
        raise DataError(f"unknown matrix format {format!r}; expected one of {FORMATS}")
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    X = _parse_csv_matrix(path) if format == "csv" else _read_raw(path)
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ParseError(f"{path}: matrix has no entries", row=0, col=0)
    check_finite(X, str(path))
    return X


def atomic_write(path, payload, mode="w"):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    with open(tmp, mode) as fh:
        fh.write(payload)
    os.replace(tmp, path)


def format_float(x):
    return repr(float(x))


def save_matrix(path, X, format="csv"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected 2-D matrix, got shape {X.shape}")
    if format == "csv":
        text = "".join(",".join(format_float(v) for v in row) + "\n" for row in X)
        atomic_write(path, text)
    elif format == "raw-f64":
        payload = _RAW_HEADER.pack(*X.shape) + np.ascontiguousarray(X, dtype="<f8").tobytes()
        atomic_write(path, payload, mode="wb")
    else:
        raise DataError(f"unknown matrix format {format!r}; expected one of {FORMATS}")


def load_labels(path):
    """Read a single-column integer label file; returns 0-based labels."""
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    rows = _read_csv_rows(path)
    out = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != 1:
            raise ParseError(f"{path}: label row {i} has {len(row)} columns", row=i, col=1)
        try:
            value = float(row[0])
        except ValueError:
            raise ParseError(f"{path}: cannot parse label {row[0]!r}", row=i, col=0) from None
        if not np.isfinite(value):
            raise NonFiniteValue(f"{path}: non-finite label at row {i}", row=i, col=0)
        if value != int(value):
            raise ParseError(f"{path}: label {row[0]!r} is not an integer", row=i, col=0)
        if value < 1:
            raise LabelOutOfRange(f"{path}: label {int(value)} at row {i} is < 1")
        out[i] = int(value) - 1
    return out


def save_labels(path, y):
    """Write 0-based labels as a 1-based single-column file."""
    atomic_write(path, "".join(f"{int(v) + 1}\n" for v in np.asarray(y)))


def preprocess(X, scheme=DEFAULT_SCHEME):
    """Normalize features.

    ``zscore`` standardizes columns (constant columns become 0), ``unit_l2``
    scales rows to unit norm (zero rows stay zero).
    """
    if scheme not in SCHEMES:
        raise DataError(f"unknown preprocessing scheme {scheme!r}; expected one of {SCHEMES}")
    X = np.array(X, dtype=np.float64)
    if scheme in ("zscore", "zscore_then_unit_l2"):
        X = X - X.mean(axis=0)
        std = X.std(axis=0)
        nonconst = std > 1e-12 * (1.0 + np.abs(X).max(axis=0))
        X[:, ~nonconst] = 0.0
        X[:, nonconst] /= std[nonconst]
    if scheme in ("unit_l2", "zscore_then_unit_l2"):
        norms = np.linalg.norm(X, axis=1)
        nz = norms > 0
        X[nz] /= norms[nz, None]
    return X


@dataclass
class TaskPair:
    """Labelled source domain plus unlabelled target domain.

    Labels are 0-based. ``target_y`` is ground truth used only for scoring.
    """

    source_X: np.ndarray
    source_y: np.ndarray
    target_X: np.ndarray
    target_y: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        self.source_X = as_feature_matrix(self.source_X, "source features")
        self.target_X = as_feature_matrix(self.target_X, "target features")
        self.source_y = np.asarray(self.source_y, dtype=np.int64).ravel()
        if self.source_X.shape[1] != self.target_X.shape[1]:
            raise DimensionMismatch(
                f"source has {self.source_X.shape[1]} features, target has {self.target_X.shape[1]}"
            )
        if self.source_y.shape[0] != self.n_source:
            raise LengthMismatch(
                f"{self.source_y.shape[0]} source labels for {self.n_source} source samples"
            )
        if self.num_classes is None:
            top = int(self.source_y.max())
            if self.target_y is not None and len(self.target_y):
                top = max(top, int(np.max(self.target_y)))
            self.num_classes = top + 1
        C = self.num_classes
        if C < 2:
            raise DataError(f"need at least 2 classes, got {C}")
        if self.source_y.min() < 0 or self.source_y.max() >= C:
            raise LabelOutOfRange(f"source labels must lie in 1..{C}")
        missing = np.setdiff1d(np.arange(C), self.source_y)
        if missing.size:
            raise DataError(f"source domain has no samples of class(es) {(missing + 1).tolist()}")
        if self.target_y is not None:
            self.target_y = np.asarray(self.target_y, dtype=np.int64).ravel()
            if self.target_y.shape[0] != self.n_target:
                raise LengthMismatch(
                    f"{self.target_y.shape[0]} target labels for {self.n_target} target samples"
                )
            if self.target_y.min() < 0 or self.target_y.max() >= C:
                raise LabelOutOfRange(f"target labels must lie in 1..{C}")

    @property
    def n_source(self):
        return self.source_X.shape[0]

    @property
    def n_target(self):
        return self.target_X.shape[0]

    @property
    def X(self):
        """Source rows stacked above target rows."""
        return np.vstack([self.source_X, self.target_X])

    def preprocessed(self, scheme=DEFAULT_SCHEME):
        """Copy with each domain normalized independently."""
        return TaskPair(
            preprocess(self.source_X, scheme),
            self.source_y,
            preprocess(self.target_X, scheme),
            self.target_y,
            self.num_classes,
        )


def load_task(source_features, source_labels, target_features, target_labels=None,
              format="csv", num_classes=None):
    return TaskPair(
        load_matrix(source_features, format),
        load_labels(source_labels),
        load_matrix(target_features, format),
        load_labels(target_labels) if target_labels else None,
        num_classes,
    )


@dataclass
class LabelMatrix:
    """One-hot label matrix ``Y`` (C x n) and the source indicator diagonal ``a``."""

    Y: np.ndarray
    a: np.ndarray

    @property
    def A(self):
        return np.diag(self.a)


def label_structures(source_y, n_target, num_classes):
    source_y = np.asarray(source_y, dtype=np.int64)
    n_s = source_y.shape[0]
    Y = np.zeros((num_classes, n_s + n_target))
    Y[source_y, np.arange(n_s)] = 1.0
    a = np.concatenate([np.ones(n_s), np.zeros(n_target)])
    return LabelMatrix(Y, a)


def build_label_structures(task):
    return label_structures(task.source_y, task.n_target, task.num_classes)
