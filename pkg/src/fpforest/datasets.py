"""Access to the benchmark datasets and preparation of raw UCI files.

Breast cancer, wine, and the handwritten-digit pairs ship with scikit-learn
and work offline. Spam base must be prepared from the raw UCI ``spambase.data``
file (see ``prepare_spambase``); ``builtin_dataset`` looks for the prepared
CSV under ``$FPF_DATA_DIR`` or ``./data``.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .data import Dataset, load_csv, save_csv
from .model import NEGATIVE, POSITIVE


class DatasetUnavailableError(FileNotFoundError):
    pass


def _binarize(X, target, positive_classes, feature_names) -> Dataset:
    y = np.where(np.isin(target, list(positive_classes)), POSITIVE, NEGATIVE)
    return Dataset(X=np.asarray(X, dtype=np.float64), y=y, feature_names=tuple(feature_names))


def breast_cancer() -> Dataset:
    """UCI breast cancer diagnostic (569 x 30); malignant is the positive class."""
    from sklearn.datasets import load_breast_cancer

    raw = load_breast_cancer()
    return _binarize(raw.data, raw.target, {0}, raw.feature_names)


def wine() -> Dataset:
    """UCI wine (178 x 13) binarized so the majority (rest) class is 73.0%.

    The positive class is the 48-sample cultivar (scikit-learn target 2);
    the other two cultivars together form the 130-sample majority side.
    """
    from sklearn.datasets import load_wine

    raw = load_wine()
    return _binarize(raw.data, raw.target, {2}, raw.feature_names)


def digits_pair(a: int, b: int) -> Dataset:
    """Two-digit slice of the bundled 8x8 handwritten digits; digit ``a`` is +1."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    mask = np.isin(raw.target, [a, b])
    names = [f"px{i // 8}_{i % 8}" for i in range(64)]
    return _binarize(raw.data[mask], raw.target[mask], {a}, names)


def spambase_path() -> Path:
    root = Path(os.environ.get("FPF_DATA_DIR", "data"))
    return root / "spambase.csv"


def spambase() -> Dataset:
    """UCI spam base prepared as a CSV; requires a local copy (not bundled)."""
    path = spambase_path()
    if not path.exists():
        raise DatasetUnavailableError(
            f"{path} not found. Download spambase.data from the UCI repository and "
            f"run: fpf prepare-data --dataset spambase --raw spambase.data --out {path}"
        )
    return load_csv(path, "label", "1")


_BUILTIN = {
    "breast_cancer": breast_cancer,
    "wine": wine,
    "spambase": spambase,
}


def builtin_dataset(name: str) -> Dataset:
    """Resolve a dataset by name; ``digits-AvB`` selects a digit pair."""
    if name in _BUILTIN:
        return _BUILTIN[name]()
    if name.startswith("digits-") and "v" in name:
        a, b = name[len("digits-"):].split("v", 1)
        return digits_pair(int(a), int(b))
    raise KeyError(f"unknown builtin dataset {name!r}; known: "
                   f"{sorted(_BUILTIN)} or digits-AvB")


# ---------------------------------------------------------------------------
# Raw UCI file preparation
# ---------------------------------------------------------------------------


def _read_raw(path) -> list[list[str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row]


def prepare_wine(raw_path, out_path) -> Dataset:
    """wine.data: class label (1/2/3) first, 13 numeric features after."""
    rows = _read_raw(raw_path)
    X = np.array([[float(v) for v in r[1:]] for r in rows])
    target = np.array([int(r[0]) for r in rows])
    names = [f"f{i}" for i in range(X.shape[1])]
    data = _binarize(X, target, {3}, names)
    save_csv(data, out_path)
    return data


def prepare_breast_cancer(raw_path, out_path) -> Dataset:
    """wdbc.data: id, diagnosis (M/B), 30 numeric features."""
    rows = _read_raw(raw_path)
    X = np.array([[float(v) for v in r[2:]] for r in rows])
    y = np.where(np.array([r[1] for r in rows]) == "M", POSITIVE, NEGATIVE)
    names = [f"f{i}" for i in range(X.shape[1])]
    data = Dataset(X=X, y=y, feature_names=tuple(names))
    save_csv(data, out_path)
    return data


def prepare_spambase(raw_path, out_path) -> Dataset:
    """spambase.data: 57 numeric features, spam indicator (1/0) last."""
    rows = _read_raw(raw_path)
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    target = np.array([int(r[-1]) for r in rows])
    names = [f"f{i}" for i in range(X.shape[1])]
    data = _binarize(X, target, {1}, names)
    save_csv(data, out_path)
    return data


PREPARERS = {
    "wine": prepare_wine,
    "breast-cancer": prepare_breast_cancer,
    "spambase": prepare_spambase,
}
