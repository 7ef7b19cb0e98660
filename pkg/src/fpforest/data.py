"""Dataset loading, binarized labels, splitting, and feature projection."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import NEGATIVE, POSITIVE

logger = logging.getLogger(__name__)


class CsvFormatError(ValueError):
    """Base error for malformed dataset files."""


class EmptyCsvError(CsvFormatError):
    pass


class MissingLabelColumnError(CsvFormatError):
    pass


class DuplicateLabelColumnError(CsvFormatError):
    pass


class NonNumericCellError(CsvFormatError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with +1/-1 labels and named feature columns.

    ``origin_indices`` maps local column positions back to the feature
    indices of the dataset this one was projected from; ``None`` means the
    identity (an unprojected dataset).
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    origin_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2:
            raise ValueError("X must be a 2-D matrix")
        if X.shape[0] == 0:
            raise ValueError("dataset must contain at least one instance")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} instances but {y.shape[0]} labels")
        if X.shape[1] != len(self.feature_names):
            raise ValueError(
                f"{X.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if not np.isfinite(X).all():
            raise ValueError("feature values must all be finite")
        bad = set(np.unique(y)) - {NEGATIVE, POSITIVE}
        if bad:
            raise ValueError(f"labels must be -1 or +1, found {sorted(bad)}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def same_content(self, other: "Dataset") -> bool:
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class SplitSpec:
    """Train/test split configuration: fraction of rows held out, RNG seed."""

    test_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must be in (0,1), got {self.test_fraction}")


def load_csv(path, label_column, positive_label: str) -> Dataset:
    """Load a header CSV; rows whose label equals ``positive_label`` map to +1.

    ``label_column`` is a header name or a 0-based column index. Every
    non-label column must parse as a float.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyCsvError(f"{path}: file is empty")
    header, body = rows[0], rows[1:]
    if not body:
        raise EmptyCsvError(f"{path}: no data rows after the header")

    if isinstance(label_column, int) or (isinstance(label_column, str) and label_column.isdigit()):
        label_idx = int(label_column)
        if not 0 <= label_idx < len(header):
            raise MissingLabelColumnError(
                f"{path}: label column index {label_idx} out of range (0..{len(header) - 1})"
            )
    else:
        hits = [i for i, name in enumerate(header) if name == label_column]
        if not hits:
            raise MissingLabelColumnError(f"{path}: no column named {label_column!r}")
        if len(hits) > 1:
            raise DuplicateLabelColumnError(
                f"{path}: column {label_column!r} appears {len(hits)} times"
            )
        label_idx = hits[0]

    feature_names = tuple(name for i, name in enumerate(header) if i != label_idx)
    X = np.empty((len(body), len(feature_names)), dtype=np.float64)
    y = np.empty(len(body), dtype=np.int64)
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise CsvFormatError(
                f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}"
            )
        c_out = 0
        for c, cell in enumerate(row):
            if c == label_idx:
                y[r] = POSITIVE if cell == positive_label else NEGATIVE
                continue
            try:
                X[r, c_out] = float(cell)
            except ValueError:
                raise NonNumericCellError(
                    f"{path}: row {r + 2}, column {header[c]!r}: "
                    f"cannot parse {cell!r} as a number"
                ) from None
            c_out += 1

    data = Dataset(X=X, y=y, feature_names=feature_names)
    if len(np.unique(data.y)) < 2:
        logger.warning("%s: degenerate dataset, only one label class present", path)
    return data


def save_csv(data: Dataset, path, label_column: str = "label") -> None:
    """Write a dataset back out; reload with positive_label='1' round-trips."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + [label_column])
        for i in range(data.n):
            writer.writerow([repr(v) for v in data.X[i]] + [str(int(data.y[i]))])


def project(data: Dataset, features) -> Dataset:
    """Keep only the given feature columns, in ascending original-index order.

    The result records the original index of each kept column so trees
    trained on the projection can be re-expressed in global coordinates.
    """
    features = sorted(set(int(f) for f in features))
    if not features:
        raise ValueError("projection feature set must be non-empty")
    if features[-1] >= data.d:
        raise ValueError(f"feature index {features[-1]} out of range for d={data.d}")
    base = data.origin_indices or tuple(range(data.d))
    return Dataset(
        X=data.X[:, features],
        y=data.y,
        feature_names=tuple(data.feature_names[f] for f in features),
        origin_indices=tuple(base[f] for f in features),
    )


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint random row split; test side gets round(test_fraction * n) rows."""
    if data.n < 2:
        raise ValueError("need at least two instances to split")
    n_test = round(spec.test_fraction * data.n)
    if n_test == 0 or n_test == data.n:
        raise ValueError(
            f"test_fraction {spec.test_fraction} yields an empty side for n={data.n}"
        )
    perm = np.random.default_rng(spec.seed).permutation(data.n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])

    def take(rows):
        return Dataset(
            X=data.X[rows],
            y=data.y[rows],
            feature_names=data.feature_names,
            origin_indices=data.origin_indices,
        )

    return take(train_rows), take(test_rows)


def majority_fraction(data: Dataset) -> float:
    """Share of the most frequent label; the floor any useful model must beat."""
    n_pos = int(np.sum(data.y == POSITIVE))
    return max(n_pos, data.n - n_pos) / data.n
