"""Tabular datasets with an ordered categorical outcome, plus fold splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyData,
    KTooLarge,
    LengthMismatch,
    MissingColumn,
    MissingValue,
    NonNumericCell,
    SingleClassOutcome,
)

#: Integer-valued columns with at most this many levels are flagged categorical.
CATEGORICAL_MAX_LEVELS = 10


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X`` (N x p) and ordered labels ``y`` in ``1..M``.

    ``label_values`` holds the original label of each encoded class, so
    ``label_values[m - 1]`` decodes class ``m``.
    """

    X: np.ndarray
    y: np.ndarray
    col_names: tuple[str, ...]
    categorical_mask: np.ndarray
    M: int
    label_values: tuple = ()

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if X.shape[0] == 0:
            raise EmptyData("dataset has no rows")
        if y.shape != (X.shape[0],):
            raise LengthMismatch(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not np.all(np.isfinite(X)):
            raise MissingValue("covariates contain NaN or infinite values")
        if np.any(y != np.round(y)):
            raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        M = int(self.M)
        if M < 2:
            raise SingleClassOutcome("an ordered outcome needs at least 2 classes")
        if y.min() < 1 or y.max() > M:
            raise ValueError(f"labels must lie in 1..{M}")
        if X.shape[0] < M:
            raise ValueError(f"need at least M={M} observations, got {X.shape[0]}")
        names = tuple(self.col_names) if self.col_names else tuple(
            f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise LengthMismatch("col_names does not match the number of columns")
        mask = np.zeros(X.shape[1], dtype=bool) if self.categorical_mask is None \
            else np.asarray(self.categorical_mask, dtype=bool)
        if mask.shape != (X.shape[1],):
            raise LengthMismatch("categorical_mask does not match the number of columns")
        labels = tuple(self.label_values) if self.label_values else tuple(range(1, M + 1))
        if len(labels) != M:
            raise LengthMismatch("label_values must have one entry per class")
        X.setflags(write=False)
        y.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "col_names", names)
        object.__setattr__(self, "categorical_mask", mask)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "label_values", labels)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.col_names,
                       self.categorical_mask, self.M, self.label_values)

    def decode(self, classes):
        """Map encoded classes ``1..M`` back to the original labels."""
        lookup = np.asarray(self.label_values)
        return lookup[np.asarray(classes, dtype=np.int64) - 1]

    def encode(self, labels):
        """Map original labels to encoded classes ``1..M``."""
        index = {v: m + 1 for m, v in enumerate(self.label_values)}
        try:
            return np.array([index[v] for v in np.asarray(labels).tolist()], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"unknown label {exc.args[0]!r}") from None


def encode_labels(values) -> tuple[np.ndarray, tuple]:
    """Order-preserving relabelling of integer labels onto ``1..M``."""
    values = np.asarray(values)
    levels = np.unique(values)
    y = np.searchsorted(levels, values) + 1
    return y.astype(np.int64), tuple(int(v) for v in levels)


def _parse_cell(cell: str, row: int, col: str) -> float:
    text = cell.strip()
    if text == "" or text.lower() in ("na", "nan"):
        raise MissingValue(f"empty cell in column {col!r}, data row {row}")
    try:
        value = float(text)
    except ValueError:
        raise NonNumericCell(f"non-numeric value {text!r} in column {col!r}, data row {row}") from None
    if not math.isfinite(value):
        raise MissingValue(f"non-finite value {text!r} in column {col!r}, data row {row}")
    return value


def detect_categorical(X: np.ndarray, max_levels: int = CATEGORICAL_MAX_LEVELS) -> np.ndarray:
    """Flag columns whose values are all integers with at most ``max_levels`` levels."""
    X = np.asarray(X, dtype=np.float64)
    integral = np.all(X == np.round(X), axis=0)
    levels = np.array([np.unique(X[:, j]).size for j in range(X.shape[1])])
    return integral & (levels <= max_levels)


def _read_table(path):
    """Header and float matrix of a headed CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyData(f"{path} is empty") from None
        rows = [r for r in reader if any(c.strip() for c in r)]
    if not rows:
        raise EmptyData(f"{path} has no data rows")
    values = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise MissingValue(f"data row {i} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            values[i - 1, j] = _parse_cell(cell, i, header[j])
    return header, values


def load_covariates(path, col_names) -> np.ndarray:
    """Columns ``col_names`` of a headed CSV file, in that order; other columns are ignored."""
    header, values = _read_table(path)
    missing = [c for c in col_names if c not in header]
    if missing:
        raise MissingColumn(f"column(s) not found: {', '.join(missing)}")
    return values[:, [header.index(c) for c in col_names]]


def load_csv(path, y_column: str, categorical_columns=(), *, auto_categorical: bool = True,
             continuous_columns=()) -> Dataset:
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Parameters
    ----------
    path : str or path-like
        UTF-8 CSV with a header row.
    y_column : str
        Name of the integer outcome column. Labels are relabelled onto
        ``1..M`` preserving order; the original values are kept in
        ``Dataset.label_values``.
    categorical_columns : sequence of str
        Columns always treated as categorical.
    auto_categorical : bool
        Also flag integer columns with at most 10 distinct levels.
    continuous_columns : sequence of str
        Columns never treated as categorical (overrides auto-detection).
    """
    header, values = _read_table(path)
    missing = [c for c in [y_column, *categorical_columns, *continuous_columns] if c not in header]
    if missing:
        raise MissingColumn(f"column(s) not found: {', '.join(missing)}")

    y_idx = header.index(y_column)
    raw_y = values[:, y_idx]
    if np.any(raw_y != np.round(raw_y)):
        raise NonNumericCell(f"outcome column {y_column!r} must hold integers")
    y, label_values = encode_labels(raw_y.astype(np.int64))
    if len(label_values) < 2:
        raise SingleClassOutcome(f"outcome column {y_column!r} has a single class")

    keep = [j for j in range(len(header)) if j != y_idx]
    names = tuple(header[j] for j in keep)
    X = values[:, keep]
    mask = detect_categorical(X) if auto_categorical else np.zeros(len(names), dtype=bool)
    for j, name in enumerate(names):
        if name in categorical_columns:
            mask[j] = True
        if name in continuous_columns:
            mask[j] = False
    return Dataset(X, y, names, mask, len(label_values), label_values)


@dataclass(frozen=True)
class SplitPlan:
    """Fold ids (``0..k-1``) and an honest half split for ``n`` observations."""

    seed: int
    fold_assignments: np.ndarray
    half_assignments: np.ndarray = field(default=None)

    @property
    def k(self) -> int:
        return int(self.fold_assignments.max()) + 1

    def folds(self):
        """Yield ``(train_idx, test_idx)`` for each fold in order."""
        for f in range(self.k):
            test = np.flatnonzero(self.fold_assignments == f)
            train = np.flatnonzero(self.fold_assignments != f)
            yield train, test


def split_halves(n: int, rng) -> np.ndarray:
    """Random boolean mask with ``ceil(n/2)`` True entries (half one)."""
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[: (n + 1) // 2]] = True
    return mask


def fold_assignments(n: int, k: int, rng) -> np.ndarray:
    """Fold id of each of ``n`` observations; fold sizes differ by at most one."""
    folds = np.empty(n, dtype=np.int64)
    for f, chunk in enumerate(np.array_split(rng.permutation(n), k)):
        folds[chunk] = f
    return folds


def split_folds(n: int, k: int, repeats: int = 1, seed: int = 0) -> list[SplitPlan]:
    """Random near-equal partitions of ``range(n)`` into ``k`` folds, once per repeat."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of observations n={n}")
    plans = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        folds = fold_assignments(n, k, rng)
        plans.append(SplitPlan(seed=seed, fold_assignments=folds,
                               half_assignments=split_halves(n, rng)))
    return plans
