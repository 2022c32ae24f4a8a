"""
Labeled data loading and stratified splitting.

Three input forms are supported:
  - vector CSV:   comma-delimited feature rows with one label column
  - UCR text:     one series per line, label first (tab, comma or space delimited)
  - distance CSV: row label first, then that row of a square dissimilarity matrix

Labels are interned to 0..c-1 in first-appearance order.
"""
import re
import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold

from reps.services.distance import DistanceMatrix
from reps.services.errors import (
    DegenerateData,
    DimensionMismatch,
    InvalidConfig,
    InvalidFoldCount,
    IoError,
    ParseError,
)

logger = logging.getLogger(__name__)

KINDS = ("vectors", "series", "index")

# UCR files in the wild use tabs, commas or runs of spaces
_UCR_SPLIT = re.compile(r"[\t, ]+")

_MAX_SEED = 2 ** 64


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledDataset:
    """Instances with class labels; payloads are feature rows, series or opaque ids."""
    name: str
    kind: str
    instances: np.ndarray
    labels: np.ndarray
    label_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind: {self.kind}")
        instances = np.asarray(self.instances, dtype=np.int64 if self.kind == "index" else np.float64)
        if self.kind != "index" and instances.ndim != 2:
            raise ValueError("feature rows / series must form a 2-D array")
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(instances) != len(labels):
            raise ValueError(f"{len(instances)} instances but {len(labels)} labels")
        object.__setattr__(self, "instances", _readonly(instances))
        object.__setattr__(self, "labels", _readonly(labels))
        if not self.label_names and len(labels):
            names = tuple(str(i) for i in range(int(labels.max()) + 1))
            object.__setattr__(self, "label_names", names)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        """Feature dimension d or series length (0 for opaque ids)."""
        return 0 if self.kind == "index" else int(self.instances.shape[1])

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def subset(self, indices: Sequence[int], name: Optional[str] = None) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            name=name or self.name,
            kind=self.kind,
            instances=self.instances[idx],
            labels=self.labels[idx],
            label_names=self.label_names,
        )


@dataclass(frozen=True)
class SplitPlan:
    """Fold assignment for stratified k-fold cross validation."""
    fold_of: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "fold_of", _readonly(np.asarray(self.fold_of, dtype=np.int64)))

    def fold(self, f: int) -> Tuple[np.ndarray, np.ndarray]:
        """(train indices, test indices) of fold f."""
        test = np.flatnonzero(self.fold_of == f)
        train = np.flatnonzero(self.fold_of != f)
        return train, test

    def folds(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return [self.fold(f) for f in range(self.k)]


# ------------------------------------------------------------------
# Parsing helpers
# ------------------------------------------------------------------
def intern_labels(tokens: Sequence[str]) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """Map label tokens to 0..c-1 in first-appearance order."""
    codes, uniques = pd.factorize(pd.Series(list(tokens), dtype=object), sort=False)
    return codes.astype(np.int64), tuple(str(u) for u in uniques)


def _read_lines(path: str, skip_header: bool = False) -> List[Tuple[int, str]]:
    """Return (1-based line number, text) for every non-blank line."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = f.read().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise IoError(f"cannot read {path}: {e}") from e

    lines = [(i + 1, line.strip()) for i, line in enumerate(raw) if line.strip()]
    if skip_header and lines:
        lines = lines[1:]
    return lines


def _to_float_matrix(cells: List[List[str]], line_numbers: List[int], columns: List[int]) -> np.ndarray:
    """
    Convert string cells to a finite float matrix.

    Args:
        cells: rows of string tokens, all the same length
        line_numbers: file line number of each row (for error messages)
        columns: 1-based file column of each cell position

    Raises:
        ParseError at the first (row-major) cell that is not a finite real
    """
    if not cells or not cells[0]:
        return np.zeros((len(cells), 0))
    try:
        # numpy parses each token with round-trip precision
        values = np.array(cells, dtype=np.float64)
    except ValueError:
        frame = pd.DataFrame(cells, dtype=object)
        numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
        values = numeric.to_numpy(dtype=np.float64)

    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        r, c = bad[0]
        raise ParseError(
            f"not a finite real number: {cells[r][c].strip()!r}",
            row=line_numbers[r],
            column=columns[c],
        )
    return values


def _check_degenerate(name: str, labels: np.ndarray) -> None:
    if len(labels) < 2:
        raise DegenerateData(f"{name}: need at least 2 instances, found {len(labels)}")
    if len(np.unique(labels)) < 2:
        raise DegenerateData(f"{name}: single-class dataset")


def _dataset_name(path: str, name: Optional[str]) -> str:
    if name:
        return name
    base = re.split(r"[\\/]", path)[-1]
    return base.rsplit(".", 1)[0] if "." in base else base


# ------------------------------------------------------------------
# Loaders
# ------------------------------------------------------------------
def load_vector_csv(path: str, label_column: int = 0, skip_header: bool = False,
                    name: Optional[str] = None) -> LabeledDataset:
    """
    Load comma-delimited feature rows.

    Args:
        path: CSV file path
        label_column: 0-based column holding the class token (negative counts from the end)
        skip_header: drop the first non-blank line
        name: dataset name (defaults to the file stem)

    Returns:
        LabeledDataset of kind "vectors" with d = fields - 1
    """
    lines = _read_lines(path, skip_header=skip_header)
    ds_name = _dataset_name(path, name)
    if not lines:
        raise DegenerateData(f"{ds_name}: empty file")

    rows = [[cell.strip() for cell in text.split(",")] for _, text in lines]
    line_numbers = [ln for ln, _ in lines]
    width = len(rows[0])
    for ln, row in zip(line_numbers, rows):
        if len(row) != width:
            raise ParseError(f"expected {width} fields, found {len(row)}", row=ln)
    if width < 2:
        raise ParseError("need a label column and at least one feature column", row=line_numbers[0])

    col = label_column + width if label_column < 0 else label_column
    if not 0 <= col < width:
        raise InvalidConfig(f"label column {label_column} out of range for {width} fields")

    for ln, row in zip(line_numbers, rows):
        if not row[col]:
            raise ParseError("empty label", row=ln, column=col + 1)

    feature_cols = [j for j in range(width) if j != col]
    cells = [[row[j] for j in feature_cols] for row in rows]
    features = _to_float_matrix(cells, line_numbers, [j + 1 for j in feature_cols])

    labels, names = intern_labels([row[col] for row in rows])
    _check_degenerate(ds_name, labels)
    logger.info(f"Loaded {ds_name}: n={len(labels)}, d={features.shape[1]}, classes={len(names)}")
    return LabeledDataset(ds_name, "vectors", features, labels, names)


def load_ucr_tsv(path: str, name: Optional[str] = None) -> LabeledDataset:
    """Load a UCR-style file: label token followed by the series values on each line."""
    lines = _read_lines(path)
    ds_name = _dataset_name(path, name)
    if not lines:
        raise DegenerateData(f"{ds_name}: empty file")

    rows = [_UCR_SPLIT.split(text) for _, text in lines]
    line_numbers = [ln for ln, _ in lines]
    length = len(rows[0]) - 1
    if length < 1:
        raise ParseError("line holds a label but no series values", row=line_numbers[0])
    for ln, row in zip(line_numbers, rows):
        if len(row) - 1 != length:
            raise ParseError(f"series length {len(row) - 1}, expected {length}", row=ln)

    cells = [row[1:] for row in rows]
    series = _to_float_matrix(cells, line_numbers, list(range(2, length + 2)))

    labels, names = intern_labels([row[0] for row in rows])
    _check_degenerate(ds_name, labels)
    logger.info(f"Loaded {ds_name}: n={len(labels)}, series length={length}, classes={len(names)}")
    return LabeledDataset(ds_name, "series", series, labels, names)


def load_distance_matrix(path: str, name: Optional[str] = None,
                         symmetrize_tol: float = 1e-9) -> Tuple[DistanceMatrix, LabeledDataset]:
    """
    Load a precomputed dissimilarity matrix.

    Returns:
        (validated DistanceMatrix, LabeledDataset of kind "index" carrying the interned labels)
    """
    lines = _read_lines(path)
    ds_name = _dataset_name(path, name)
    if not lines:
        raise DegenerateData(f"{ds_name}: empty file")

    rows = [[cell.strip() for cell in text.split(",")] for _, text in lines]
    line_numbers = [ln for ln, _ in lines]
    n = len(rows)
    for ln, row in zip(line_numbers, rows):
        if len(row) != n + 1:
            raise ParseError(f"expected label plus {n} distances, found {len(row) - 1}", row=ln)
        if not row[0]:
            raise ParseError("empty label", row=ln, column=1)

    values = _to_float_matrix([row[1:] for row in rows], line_numbers, list(range(2, n + 2)))
    labels, names = intern_labels([row[0] for row in rows])
    _check_degenerate(ds_name, labels)

    matrix = DistanceMatrix.from_array(values, symmetrize_tol=symmetrize_tol)
    logger.info(f"Loaded distance matrix {ds_name}: n={n}, classes={len(names)}")
    return matrix, index_dataset(ds_name, labels, names)


def index_dataset(name: str, labels: Sequence[int], label_names: Sequence[str] = ()) -> LabeledDataset:
    """Dataset of opaque ids, for use with a precomputed distance matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    return LabeledDataset(name, "index", np.arange(len(labels)), labels, tuple(label_names))


def concat_datasets(first: LabeledDataset, second: LabeledDataset, name: Optional[str] = None) -> LabeledDataset:
    """
    Stack two datasets of the same kind (e.g. a UCR train and test file).
    Labels of the second are re-interned against the first's label names.
    """
    if first.kind != second.kind:
        raise DimensionMismatch(f"cannot combine {first.kind} with {second.kind}")
    if first.kind != "index" and first.dimension != second.dimension:
        raise DimensionMismatch(f"dimension {first.dimension} vs {second.dimension}")

    names = list(first.label_names)
    lookup = {label: i for i, label in enumerate(names)}
    remapped = []
    for label in second.labels:
        token = second.label_names[int(label)]
        if token not in lookup:
            lookup[token] = len(names)
            names.append(token)
        remapped.append(lookup[token])

    if first.kind == "index":
        instances = np.arange(first.n + second.n)
    else:
        instances = np.vstack([first.instances, second.instances])
    labels = np.concatenate([first.labels, np.asarray(remapped, dtype=np.int64)])
    return LabeledDataset(name or first.name, first.kind, instances, labels, tuple(names))


# ------------------------------------------------------------------
# Writers (17 significant digits, so values reload bit-exactly)
# ------------------------------------------------------------------
def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_text(path: str, lines: List[str]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def write_vector_csv(ds: LabeledDataset, path: str) -> None:
    """Label in column 0, then the features."""
    lines = [
        ",".join([ds.label_names[int(y)]] + [_fmt(v) for v in row])
        for row, y in zip(ds.instances, ds.labels)
    ]
    _write_text(path, lines)


def write_ucr_tsv(ds: LabeledDataset, path: str) -> None:
    lines = [
        "\t".join([ds.label_names[int(y)]] + [_fmt(v) for v in row])
        for row, y in zip(ds.instances, ds.labels)
    ]
    _write_text(path, lines)


def write_distance_matrix(matrix: DistanceMatrix, ds: LabeledDataset, path: str) -> None:
    if matrix.n != ds.n:
        raise DimensionMismatch(f"matrix has {matrix.n} rows, dataset {ds.n} labels")
    lines = [
        ",".join([ds.label_names[int(y)]] + [_fmt(v) for v in row])
        for row, y in zip(matrix.values, ds.labels)
    ]
    _write_text(path, lines)
    logger.info(f"Distance matrix written to {path}")


# ------------------------------------------------------------------
# Splits
# ------------------------------------------------------------------
def kfold_split(ds: LabeledDataset, k: int, seed: int) -> SplitPlan:
    """
    Stratified k-fold plan.

    Each class is shuffled with a generator seeded from `seed` and dealt
    over the folds, so per-class fold counts differ by at most one.
    """
    n = ds.n
    if not 2 <= k <= n:
        raise InvalidFoldCount(f"fold count {k} must lie in [2, {n}]")
    if not 0 <= seed < _MAX_SEED:
        raise InvalidConfig(f"seed {seed} is not a 64-bit unsigned integer")
    largest = max_fold_count(ds)
    if k > largest:
        raise InvalidFoldCount(f"fold count {k} exceeds the largest class ({largest} instances)")

    # RandomState only takes 32-bit seeds directly
    rng = np.random.RandomState(np.random.MT19937(np.random.SeedSequence(seed)))
    cv = StratifiedKFold(n_splits=k, shuffle=True, random_state=rng)

    fold_of = np.empty(n, dtype=np.int64)
    with warnings.catch_warnings():
        # classes smaller than k simply miss some folds
        warnings.simplefilter("ignore", UserWarning)
        for f, (_, test) in enumerate(cv.split(np.zeros((n, 1)), ds.labels)):
            fold_of[test] = f
    return SplitPlan(fold_of=fold_of, k=k, seed=seed)


def max_fold_count(ds: LabeledDataset) -> int:
    """Largest k a stratified plan accepts: the size of the biggest class."""
    return int(np.bincount(ds.labels).max())


def holdout_split(n_train: int, n_test: int) -> Tuple[np.ndarray, np.ndarray]:
    """Train/test indices for a dataset built as concat(train, test)."""
    return np.arange(n_train), np.arange(n_train, n_train + n_test)


def fold_indices(plan: SplitPlan, fold: int) -> Tuple[np.ndarray, np.ndarray]:
    if not 0 <= fold < plan.k:
        raise InvalidFoldCount(f"fold {fold} outside [0, {plan.k})")
    return plan.fold(fold)
