"""Dataset ingestion, encoding, splitting and synthetic generation.

Categorical features are stored as integer category indices with 0 denoting
the reference category; the one-hot encoding of a feature with k_j categories
maps index 0 to the all-zero block and index t >= 1 to the unit vector e_t of
length k_j - 1.
"""

from __future__ import annotations

import csv
import json
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Schema violations, malformed files, or degenerate datasets."""


ROLES = ("numeric", "categorical", "label", "ignored")
MISSING_POLICIES = ("new-category", "drop-row")


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles and ingestion policies for a CSV file.

    ``positive_label`` of None selects the majority class as +1 (ties broken
    by lexicographically smallest class name); an explicit value maps that
    class to +1 and all others to -1.
    """

    numeric: tuple[str, ...]
    categorical: tuple[str, ...]
    label: str
    positive_label: str | None = None
    missing_policy: str = "new-category"
    missing_token: str = "?"
    scale_numeric: bool = False

    def __post_init__(self):
        if self.missing_policy not in MISSING_POLICIES:
            raise DataError(f"unknown missing policy {self.missing_policy!r}")
        names = list(self.numeric) + list(self.categorical) + [self.label]
        if len(set(names)) != len(names):
            raise DataError("schema assigns a column more than one role")

    @staticmethod
    def from_dict(d: dict) -> "DatasetSchema":
        columns = d.get("columns")
        if not isinstance(columns, dict) or not columns:
            raise DataError("schema needs a non-empty 'columns' role map")
        numeric, categorical, labels = [], [], []
        for name, role in columns.items():
            if role not in ROLES:
                raise DataError(f"column {name!r} has unknown role {role!r}")
            if role == "numeric":
                numeric.append(name)
            elif role == "categorical":
                categorical.append(name)
            elif role == "label":
                labels.append(name)
        if len(labels) != 1:
            raise DataError(f"schema must mark exactly one label column, got {len(labels)}")
        return DatasetSchema(
            numeric=tuple(numeric),
            categorical=tuple(categorical),
            label=labels[0],
            positive_label=d.get("positive_label"),
            missing_policy=d.get("missing_policy", "new-category"),
            missing_token=d.get("missing_token", "?"),
            scale_numeric=bool(d.get("scale_numeric", False)),
        )

    @staticmethod
    def from_json(path) -> "DatasetSchema":
        with open(path, encoding="utf-8") as handle:
            return DatasetSchema.from_dict(json.load(handle))

    def to_dict(self) -> dict:
        columns = {name: "numeric" for name in self.numeric}
        columns.update({name: "categorical" for name in self.categorical})
        columns[self.label] = "label"
        return {
            "columns": columns,
            "positive_label": self.positive_label,
            "missing_policy": self.missing_policy,
            "missing_token": self.missing_token,
            "scale_numeric": self.scale_numeric,
        }


@dataclass(frozen=True)
class Dataset:
    """Immutable mixed-feature dataset.

    X is N x n real, Z is N x m with category indices in 0..k_j-1, and y
    takes values in {-1, +1}.  ``categories`` keeps the ordered dictionary
    per categorical feature (index 0 = reference category).
    """

    X: np.ndarray
    Z: np.ndarray
    y: np.ndarray
    cardinalities: tuple[int, ...]
    numeric_names: tuple[str, ...] = ()
    categorical_names: tuple[str, ...] = ()
    categories: tuple[tuple[str, ...], ...] = ()
    label_name: str = "label"
    positive_classes: tuple[str, ...] = ("+1",)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=np.int64))
        y = np.asarray(self.y, dtype=np.int64).ravel()
        N = y.shape[0]
        if X.size == 0:
            X = X.reshape(N, -1)
        if Z.size == 0:
            Z = Z.reshape(N, -1)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)
        if X.shape[0] != N or Z.shape[0] != N:
            raise DataError("X, Z and y disagree on the number of rows")
        if Z.shape[1] != len(self.cardinalities):
            raise DataError("Z width does not match the cardinality list")
        if any(kj < 2 for kj in self.cardinalities):
            raise DataError("every categorical feature needs at least 2 categories")
        for j, kj in enumerate(self.cardinalities):
            col = Z[:, j]
            if N and (col.min() < 0 or col.max() >= kj):
                raise DataError(f"category index out of range in feature {j}")
        if N and not np.all(np.isin(y, (-1, 1))):
            raise DataError("labels must be -1 or +1")
        if self.categories and len(self.categories) != len(self.cardinalities):
            raise DataError("categories list does not match the feature count")
        for j, cats in enumerate(self.categories):
            if len(cats) != self.cardinalities[j]:
                raise DataError(f"dictionary size mismatch in feature {j}")

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Z.shape[1]

    @property
    def k(self) -> int:
        # total one-hot dimension: sum of (k_j - 1)
        return int(sum(self.cardinalities)) - self.m

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            X=self.X[idx],
            Z=self.Z[idx],
            y=self.y[idx],
            cardinalities=self.cardinalities,
            numeric_names=self.numeric_names,
            categorical_names=self.categorical_names,
            categories=self.categories,
            label_name=self.label_name,
            positive_classes=self.positive_classes,
        )

    def replace_X(self, X: np.ndarray) -> "Dataset":
        return Dataset(
            X=X,
            Z=self.Z,
            y=self.y,
            cardinalities=self.cardinalities,
            numeric_names=self.numeric_names,
            categorical_names=self.categorical_names,
            categories=self.categories,
            label_name=self.label_name,
            positive_classes=self.positive_classes,
        )


def block_offsets(cardinalities) -> np.ndarray:
    """Start column of each feature's block in the one-hot layout."""
    widths = [kj - 1 for kj in cardinalities]
    return np.concatenate(([0], np.cumsum(widths)))[:-1].astype(np.int64)


def one_hot(z_index: int, k_j: int) -> np.ndarray:
    """Encode a category index into its length k_j - 1 one-hot block."""
    if not 0 <= z_index < k_j:
        raise DataError(f"category index {z_index} out of range for cardinality {k_j}")
    block = np.zeros(k_j - 1)
    if z_index >= 1:
        block[z_index - 1] = 1.0
    return block


def decode_one_hot(block: np.ndarray) -> int:
    block = np.asarray(block)
    hits = np.flatnonzero(block)
    if hits.size == 0:
        return 0
    if hits.size > 1:
        raise DataError("one-hot block has more than one active entry")
    return int(hits[0]) + 1


def one_hot_matrix(Z: np.ndarray, cardinalities) -> np.ndarray:
    """N x k one-hot encoding of the whole categorical matrix."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.int64))
    N = Z.shape[0]
    k = int(sum(cardinalities)) - len(cardinalities)
    out = np.zeros((N, k))
    offsets = block_offsets(cardinalities)
    for j, kj in enumerate(cardinalities):
        col = Z[:, j]
        rows = np.flatnonzero(col > 0)
        out[rows, offsets[j] + col[rows] - 1] = 1.0
    return out


def _read_rows(path, schema: DatasetSchema):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file or missing header row")
        header = set(reader.fieldnames)
        for name in list(schema.numeric) + list(schema.categorical) + [schema.label]:
            if name not in header:
                raise DataError(f"{path}: column {name!r} not found in header")
        return list(reader)


def ingest_csv(path, schema: DatasetSchema) -> Dataset:
    """Read a headered CSV into a Dataset under the given schema.

    Missing tokens in categorical columns become a category of their own or
    drop the row, per the schema policy; rows with a missing label are always
    dropped.  Categorical columns left with fewer than two observed values
    are removed.
    """
    raw = _read_rows(path, schema)
    token = schema.missing_token
    kept = []
    for row in raw:
        if row[schema.label] is None or row[schema.label] == token:
            continue
        cells = [row[c] for c in schema.numeric] + [row[c] for c in schema.categorical]
        if any(cell is None for cell in cells):
            raise DataError(f"{path}: ragged row with missing columns")
        if schema.missing_policy == "drop-row" and token in cells:
            continue
        if schema.missing_policy == "new-category":
            # missing numeric values cannot be encoded as a category
            for c in schema.numeric:
                if row[c] == token:
                    raise DataError(
                        f"{path}: missing value in numeric column {c!r}; "
                        "use the drop-row policy for this file"
                    )
        kept.append(row)
    if not kept:
        raise DataError(f"{path}: no usable rows after filtering")

    X = np.zeros((len(kept), len(schema.numeric)))
    for jc, c in enumerate(schema.numeric):
        for i, row in enumerate(kept):
            try:
                X[i, jc] = float(row[c])
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric value {row[c]!r} in column {c!r}") from exc

    cat_names, dictionaries, columns = [], [], []
    for c in schema.categorical:
        values = [row[c] for row in kept]
        cats = sorted(set(values))
        if len(cats) < 2:
            continue  # constant column carries no signal; drop it
        lookup = {v: t for t, v in enumerate(cats)}
        cat_names.append(c)
        dictionaries.append(tuple(cats))
        columns.append([lookup[v] for v in values])
    Z = (
        np.array(columns, dtype=np.int64).T
        if columns
        else np.zeros((len(kept), 0), dtype=np.int64)
    )

    labels = [row[schema.label] for row in kept]
    if schema.positive_label is not None:
        if schema.positive_label not in set(labels):
            raise DataError(f"positive label {schema.positive_label!r} not present in data")
        positive = schema.positive_label
    else:
        counts = Counter(labels)
        top = max(counts.values())
        positive = min(name for name, cnt in counts.items() if cnt == top)
    y = np.where(np.array(labels) == positive, 1, -1).astype(np.int64)

    return Dataset(
        X=X,
        Z=Z,
        y=y,
        cardinalities=tuple(len(d) for d in dictionaries),
        numeric_names=tuple(schema.numeric),
        categorical_names=tuple(cat_names),
        categories=tuple(dictionaries),
        label_name=schema.label,
        positive_classes=(positive,),
    )


@dataclass(frozen=True)
class DatasetEncoding:
    """The frozen encoding a trained model carries to score new files."""

    numeric_names: tuple[str, ...]
    categorical_names: tuple[str, ...]
    categories: tuple[tuple[str, ...], ...]
    label_name: str
    positive_classes: tuple[str, ...]
    missing_token: str = "?"
    numeric_mean: tuple[float, ...] | None = None
    numeric_scale: tuple[float, ...] | None = None

    @staticmethod
    def from_dataset(ds: Dataset, mean=None, scale=None, missing_token="?") -> "DatasetEncoding":
        return DatasetEncoding(
            numeric_names=ds.numeric_names,
            categorical_names=ds.categorical_names,
            categories=ds.categories,
            label_name=ds.label_name,
            positive_classes=ds.positive_classes,
            missing_token=missing_token,
            numeric_mean=None if mean is None else tuple(float(v) for v in mean),
            numeric_scale=None if scale is None else tuple(float(v) for v in scale),
        )

    def to_dict(self) -> dict:
        return {
            "numeric_names": list(self.numeric_names),
            "categorical_names": list(self.categorical_names),
            "categories": [list(c) for c in self.categories],
            "label_name": self.label_name,
            "positive_classes": list(self.positive_classes),
            "missing_token": self.missing_token,
            "numeric_mean": None if self.numeric_mean is None else list(self.numeric_mean),
            "numeric_scale": None if self.numeric_scale is None else list(self.numeric_scale),
        }

    @staticmethod
    def from_dict(d: dict) -> "DatasetEncoding":
        return DatasetEncoding(
            numeric_names=tuple(d["numeric_names"]),
            categorical_names=tuple(d["categorical_names"]),
            categories=tuple(tuple(c) for c in d["categories"]),
            label_name=d["label_name"],
            positive_classes=tuple(d["positive_classes"]),
            missing_token=d.get("missing_token", "?"),
            numeric_mean=tuple(d["numeric_mean"]) if d.get("numeric_mean") else None,
            numeric_scale=tuple(d["numeric_scale"]) if d.get("numeric_scale") else None,
        )


def encode_csv(path, encoding: DatasetEncoding) -> Dataset:
    """Re-encode a CSV file with a previously learned encoding.

    Category values unseen at training time fall back to the reference
    category (with a warning); rows with missing label or missing numeric
    cells are dropped.
    """
    schema = DatasetSchema(
        numeric=encoding.numeric_names,
        categorical=encoding.categorical_names,
        label=encoding.label_name,
        missing_token=encoding.missing_token,
    )
    raw = _read_rows(path, schema)
    token = encoding.missing_token
    kept = []
    for row in raw:
        if row[schema.label] is None or row[schema.label] == token:
            continue
        if any(row[c] is None or row[c] == token for c in encoding.numeric_names):
            continue
        if any(row[c] is None for c in encoding.categorical_names):
            raise DataError(f"{path}: ragged row with missing columns")
        kept.append(row)
    if not kept:
        raise DataError(f"{path}: no usable rows after filtering")

    X = np.zeros((len(kept), len(encoding.numeric_names)))
    for jc, c in enumerate(encoding.numeric_names):
        for i, row in enumerate(kept):
            try:
                X[i, jc] = float(row[c])
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric value {row[c]!r} in column {c!r}") from exc
    if encoding.numeric_mean is not None and encoding.numeric_scale is not None:
        X = (X - np.asarray(encoding.numeric_mean)) / np.asarray(encoding.numeric_scale)

    unseen = 0
    Z = np.zeros((len(kept), len(encoding.categorical_names)), dtype=np.int64)
    for j, c in enumerate(encoding.categorical_names):
        lookup = {v: t for t, v in enumerate(encoding.categories[j])}
        for i, row in enumerate(kept):
            t = lookup.get(row[c])
            if t is None:
                unseen += 1
                t = 0
            Z[i, j] = t
    if unseen:
        warnings.warn(f"{unseen} categorical cell(s) unseen at training time; mapped to the reference category")

    positive = set(encoding.positive_classes)
    y = np.array([1 if row[schema.label] in positive else -1 for row in kept], dtype=np.int64)

    return Dataset(
        X=X,
        Z=Z,
        y=y,
        cardinalities=tuple(len(c) for c in encoding.categories),
        numeric_names=encoding.numeric_names,
        categorical_names=encoding.categorical_names,
        categories=encoding.categories,
        label_name=encoding.label_name,
        positive_classes=encoding.positive_classes,
    )


def split(dataset: Dataset, train_fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Random row split; both sides must be non-empty."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError("train fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.N)
    n_train = int(round(dataset.N * train_fraction))
    if n_train == 0 or n_train == dataset.N:
        raise DataError(f"fraction {train_fraction} leaves an empty side for N={dataset.N}")
    return dataset.take(perm[:n_train]), dataset.take(perm[n_train:])


def k_folds(dataset: Dataset, K: int, seed) -> list[tuple[Dataset, Dataset]]:
    """K (train, validation) pairs with validation sizes differing by <= 1."""
    if K < 2:
        raise DataError("K must be at least 2")
    if dataset.N < K:
        raise DataError(f"cannot build {K} folds from {dataset.N} rows")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.N)
    folds = np.array_split(perm, K)
    pairs = []
    for i in range(K):
        val = folds[i]
        train = np.concatenate([folds[j] for j in range(K) if j != i])
        pairs.append((dataset.take(train), dataset.take(val)))
    return pairs


@dataclass(frozen=True)
class GroundTruth:
    """Generator coefficients behind a synthetic dataset."""

    beta0: float
    beta_cat: np.ndarray

    def to_dict(self) -> dict:
        return {"beta0": float(self.beta0), "beta_cat": [float(v) for v in self.beta_cat]}


def generate_synthetic(N: int, m: int, seed) -> tuple[Dataset, GroundTruth]:
    """Random binary-feature logistic instance.

    Coefficients are standard normal scaled to unit Euclidean norm; features
    are uniform on {0,1}^m; labels follow the logistic law at the sampled
    coefficients.
    """
    if N < 1 or m < 1:
        raise DataError("need N >= 1 and m >= 1")
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(m + 1)
    beta = beta / np.linalg.norm(beta)
    beta0, beta_cat = float(beta[0]), beta[1:]
    Z = rng.integers(0, 2, size=(N, m), dtype=np.int64)
    p = 1.0 / (1.0 + np.exp(-(beta0 + Z @ beta_cat)))
    y = np.where(rng.random(N) < p, 1, -1).astype(np.int64)
    ds = Dataset(
        X=np.zeros((N, 0)),
        Z=Z,
        y=y,
        cardinalities=(2,) * m,
        numeric_names=(),
        categorical_names=tuple(f"z{j + 1}" for j in range(m)),
        categories=(("0", "1"),) * m,
        label_name="label",
        positive_classes=("+1",),
    )
    return ds, GroundTruth(beta0=beta0, beta_cat=beta_cat)


def write_csv(dataset: Dataset, path):
    """Export to the same headered CSV format the ingester reads."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = list(dataset.numeric_names) + list(dataset.categorical_names) + [dataset.label_name]
        writer.writerow(header)
        for i in range(dataset.N):
            row = [repr(float(v)) for v in dataset.X[i]]
            for j in range(dataset.m):
                row.append(dataset.categories[j][dataset.Z[i, j]])
            row.append("+1" if dataset.y[i] == 1 else "-1")
            writer.writerow(row)


def numeric_stats(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and scale for z-scoring; constant columns get scale 1."""
    if dataset.n == 0:
        return np.zeros(0), np.ones(0)
    mean = dataset.X.mean(axis=0)
    scale = dataset.X.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return mean, scale


def apply_numeric_scaling(dataset: Dataset, mean: np.ndarray, scale: np.ndarray) -> Dataset:
    if dataset.n == 0:
        return dataset
    return dataset.replace_X((dataset.X - mean) / scale)
