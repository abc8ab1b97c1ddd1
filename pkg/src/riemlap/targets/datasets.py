"""Dataset container, CSV ingestion and the bundled/synthetic data sources."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

DATA_ENV = "RIEMLAP_DATA_DIR"

# Logistic-regression datasets: name -> expected file name (pre-encoded, label last).
LOGREG_FILES = {
    "ripley": "ripley.csv",
    "pima": "pima.csv",
    "heart": "heart.csv",
    "australian": "australian.csv",
    "german": "german.csv",
}
BUNDLED = {"ripley", "pima"}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    standardized: bool = False
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] < 1:
            raise DatasetError(f"X must be a non-empty 2-D array, got shape {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DatasetError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DatasetError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def is_binary(self) -> bool:
        return bool(np.all((self.y == 0.0) | (self.y == 1.0)))


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv_dataset(path, standardize: bool = False, add_intercept: bool = True,
                     name: str | None = None) -> Dataset:
    """Read a comma-separated numeric table whose final column is the label.

    A header row is detected when the first row holds non-numeric cells.
    Standardization z-scores every covariate column (population std); the
    intercept column of ones is appended last and never standardized.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    start = 0
    if not all(_is_number(c) for c in rows[0]):
        start = 1
    width = len(rows[0])
    values = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DatasetError(f"{path}: row {i} has {len(row)} columns, expected {width}")
        parsed = []
        for j, cell in enumerate(row, start=1):
            try:
                val = float(cell)
            except ValueError:
                raise DatasetError(f"{path}: row {i}, column {j}: cannot parse {cell!r}") from None
            if not np.isfinite(val):
                raise DatasetError(f"{path}: row {i}, column {j}: non-finite value {cell!r}")
            parsed.append(val)
        values.append(parsed)
    if not values:
        raise DatasetError(f"{path}: no data rows")
    if width < 2:
        raise DatasetError(f"{path}: need at least one covariate and a label column")
    table = np.array(values)
    X, y = table[:, :-1], table[:, -1]
    if standardize:
        std = X.std(axis=0)
        bad = np.flatnonzero(std == 0.0)
        if bad.size:
            raise DatasetError(f"{path}: column {bad[0] + 1} is constant; cannot standardize")
        X = (X - X.mean(axis=0)) / std
    if add_intercept:
        X = np.column_stack([X, np.ones(X.shape[0])])
    return Dataset(X, y, standardized=standardize, name=name or path.stem)


def data_dir() -> Path | None:
    root = os.environ.get(DATA_ENV)
    return Path(root) if root else None


def resolve_dataset_path(name: str) -> Path:
    """Find ``<name>.csv`` in ``$RIEMLAP_DATA_DIR``, falling back to bundled copies."""
    fname = LOGREG_FILES.get(name, f"{name}.csv")
    root = data_dir()
    if root is not None and (root / fname).exists():
        return root / fname
    if name in BUNDLED:
        return Path(str(resources.files("riemlap.datasets").joinpath(fname)))
    where = f"{DATA_ENV}={root}" if root else f"{DATA_ENV} (unset)"
    expected = ", ".join(sorted(LOGREG_FILES.values()))
    raise DatasetError(f"dataset {name!r} not found: expected {fname} under {where}; "
                       f"known logistic-regression files: {expected}")


def load_logreg_dataset(name: str, standardize: bool, add_intercept: bool = True) -> Dataset:
    ds = load_csv_dataset(resolve_dataset_path(name), standardize, add_intercept, name=name)
    if not ds.is_binary():
        raise DatasetError(f"dataset {name!r} has labels outside {{0, 1}}")
    return ds


def snelson_like(n: int = 200, seed: int = 0, noise_std: float = 0.3) -> Dataset:
    """1-D regression data on [0, 6] shaped like the classic Snelson toy set.

    Used when no ``snelson.csv`` is available. The generator is fixed so every
    run sees the same points for a given seed.
    """
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0.0, 6.0, n))
    f = np.sin(1.8 * x) * (1.0 + 0.15 * x) + 0.25 * x - 0.7
    y = f + noise_std * rng.standard_normal(n)
    return Dataset(x[:, None], y, name="snelson_like")


def load_regression_1d(seed: int = 0) -> Dataset:
    root = data_dir()
    if root is not None and (root / "snelson.csv").exists():
        return load_csv_dataset(root / "snelson.csv", standardize=False,
                                add_intercept=False, name="snelson")
    return snelson_like(seed=seed)


def split_complete(data: Dataset, n_test: int = 50, seed: int = 1):
    """Random train/test split with a fixed seed."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(data.n)
    test, train = np.sort(idx[:n_test]), np.sort(idx[n_test:])
    return (Dataset(data.X[train], data.y[train], name=data.name + "_train"),
            Dataset(data.X[test], data.y[test], name=data.name + "_test"))


def split_gap(data: Dataset, lo: float = 1.5, hi: float = 3.0):
    """Train on points outside ``(lo, hi)``; test on the held-out gap."""
    x = data.X[:, 0]
    inside = (x > lo) & (x < hi)
    return (Dataset(data.X[~inside], data.y[~inside], name=data.name + "_gap_train"),
            Dataset(data.X[inside], data.y[inside], name=data.name + "_gap_test"))
