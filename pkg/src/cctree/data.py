"""Tabular dataset ingestion: LIBSVM / CSV parsing, seeded splits, standardization."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np


class Task(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class Sample(NamedTuple):
    features: np.ndarray
    target: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense feature matrix with one target per row.

    Classification targets are always -1.0 / +1.0; ``label_map`` records how
    the raw labels were mapped.
    """

    X: np.ndarray
    y: np.ndarray
    task: Task
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        task = Task(self.task)
        object.__setattr__(self, "task", task)
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError("no samples")
        if y.shape != (X.shape[0],):
            raise DataError(f"target length {y.shape} does not match {X.shape[0]} rows")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        if not np.all(np.isfinite(y)):
            raise DataError("non-finite target values")
        if task is Task.CLASSIFICATION and not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("classification targets must be -1 or +1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def feature_count(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.X[i], float(self.y[i]))

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.task, dict(self.label_map))


def _map_labels(raw: list[float], task: Task) -> tuple[np.ndarray, dict]:
    y = np.asarray(raw, dtype=float)
    if task is Task.REGRESSION:
        return y, {}
    distinct = sorted(set(raw))
    if len(distinct) > 2:
        raise DataError(
            f"classification requires at most two distinct labels, got {len(distinct)}: "
            f"{distinct[:5]}"
        )
    if set(distinct) <= {-1.0, 1.0}:
        mapping = {v: v for v in distinct}
    else:
        mapping = {v: m for v, m in zip(distinct, (-1.0, 1.0))}
    return np.array([mapping[v] for v in raw]), mapping


def _as_text(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    if hasattr(data, "read"):
        data = data.read()
        return data.decode("utf-8") if isinstance(data, bytes) else data
    return data


def parse_libsvm(data, task: Task | str, n_features: int | None = None) -> Dataset:
    """Parse LIBSVM sparse text (``<target> <idx>:<val> ...``, 1-based indices).

    Missing indices become 0. ``feature_count`` is the largest index seen unless
    ``n_features`` is given.
    """
    task = Task(task)
    targets: list[float] = []
    rows: list[dict[int, float]] = []
    max_index = 0
    for lineno, line in enumerate(_as_text(data).splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            target = float(parts[0])
        except ValueError:
            raise DataError(f"line {lineno}: bad target {parts[0]!r}") from None
        row: dict[int, float] = {}
        prev = 0
        for tok in parts[1:]:
            idx_s, sep, val_s = tok.partition(":")
            try:
                if not sep:
                    raise ValueError
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise DataError(f"line {lineno}: malformed feature {tok!r}") from None
            if idx <= prev:
                raise DataError(f"line {lineno}: indices must be >= 1 and strictly increasing")
            if not math.isfinite(val):
                raise DataError(f"line {lineno}: non-finite value {tok!r}")
            row[idx] = val
            prev = idx
        max_index = max(max_index, prev)
        targets.append(target)
        rows.append(row)
    if not rows:
        raise DataError("no samples")
    p = max_index if n_features is None else n_features
    if p < max_index:
        raise DataError(f"feature index {max_index} exceeds n_features={p}")
    X = np.zeros((len(rows), p))
    for i, row in enumerate(rows):
        for idx, val in row.items():
            X[i, idx - 1] = val
    y, mapping = _map_labels(targets, task)
    return Dataset(X, y, task, mapping)


def serialize_libsvm(ds: Dataset) -> str:
    """Inverse of :func:`parse_libsvm`; the last feature is always written so
    the dimensionality survives a round trip."""
    p = ds.feature_count
    lines = []
    for x, t in zip(ds.X, ds.y):
        head = f"{int(t):+d}" if ds.task is Task.CLASSIFICATION else repr(float(t))
        toks = [f"{j + 1}:{x[j]!r}" for j in range(p) if x[j] != 0.0 or j == p - 1]
        lines.append(" ".join([head, *toks]))
    return "\n".join(lines) + "\n"


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_csv(data, target_column: str | int = -1, task: Task | str = Task.CLASSIFICATION) -> Dataset:
    """Parse a rectangular numeric CSV table with an optional header row.

    ``target_column`` is a header name or a (possibly negative) column index.
    """
    task = Task(task)
    rows = [r for r in csv.reader(io.StringIO(_as_text(data))) if any(c.strip() for c in r)]
    if not rows:
        raise DataError("no samples")
    rows = [[c.strip() for c in r] for r in rows]
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = rows[0], rows[1:]
    if not rows:
        raise DataError("no samples")
    width = len(header) if header is not None else len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"row {i + 1 + (header is not None)}: expected {width} cells, got {len(r)}")

    if isinstance(target_column, str) and not _is_int(target_column):
        if header is None or target_column not in header:
            raise DataError(f"target column {target_column!r} not found")
        col = header.index(target_column)
    else:
        col = int(target_column)
        if not -width <= col < width:
            raise DataError(f"target column {col} out of range for {width} columns")
        col %= width

    values = np.empty((len(rows), width))
    for i, r in enumerate(rows):
        for j, c in enumerate(r):
            try:
                values[i, j] = float(c)
            except ValueError:
                line = i + 1 + (header is not None)
                raise DataError(f"row {line}, column {j + 1}: non-numeric cell {c!r}") from None
    X = np.delete(values, col, axis=1)
    y, mapping = _map_labels(values[:, col].tolist(), task)
    return Dataset(X, y, task, mapping)


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def load_dataset(path, task: Task | str, target_column: str | int = -1) -> Dataset:
    """Read ``path`` as CSV (``.csv`` suffix) or LIBSVM (anything else)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).lower().endswith(".csv"):
        return parse_csv(raw, target_column, task)
    return parse_libsvm(raw, task)


@dataclass(frozen=True, eq=False)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("train", "validation", "test")}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitIndices":
        return cls(*(np.asarray(d[k], dtype=int) for k in ("train", "validation", "test")))


TRAIN_FRACTION = 0.64
VALIDATION_FRACTION = 0.16


def split_dataset(ds: Dataset | int, seed: int) -> SplitIndices:
    """Shuffle with ``seed`` and cut 64/16/20 (floors for train and validation)."""
    n = ds if isinstance(ds, int) else len(ds)
    if n < 5:
        raise DataError(f"need at least 5 samples to split, got {n}")
    n_train = math.floor(TRAIN_FRACTION * n)
    n_val = math.floor(VALIDATION_FRACTION * n)
    if n_val == 0:
        raise DataError(f"{n} samples leave the validation split empty")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])


@dataclass(frozen=True, eq=False)
class Standardization:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def fit_standardization(X: np.ndarray) -> Standardization:
    X = np.asarray(X, dtype=float)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return Standardization(X.mean(axis=0), std)


def standardize(ds: Dataset, stats: Standardization | None = None) -> tuple[Dataset, Standardization]:
    """Return ``ds`` with features mapped to (x - mean) / std.

    Pass the stats returned for the training split when transforming
    validation and test data.
    """
    if stats is None:
        stats = fit_standardization(ds.X)
    elif stats.mean.shape != (ds.feature_count,):
        raise DataError(f"stats cover {stats.mean.shape[0]} features, dataset has {ds.feature_count}")
    return Dataset(stats.apply(ds.X), ds.y, ds.task, dict(ds.label_map)), stats
