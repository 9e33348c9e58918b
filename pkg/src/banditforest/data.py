"""Datasets, CSV ingestion, synthetic generators and row/feature samplers."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"
TASKS = (CLASSIFICATION, REGRESSION)


class DataError(ValueError):
    """Raised for malformed inputs to dataset construction or sampling."""


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable feature matrix (stored column-major) plus targets.

    ``targets`` holds dense class indices ``0..n_classes-1`` for
    classification and reals for regression.  ``class_labels`` maps class
    indices back to the original label text, when known.
    """

    features: np.ndarray
    targets: np.ndarray
    task: str
    n_classes: int = 0
    feature_names: tuple[str, ...] | None = None
    class_labels: tuple[str, ...] | None = None
    label_name: str = "y"

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        X = np.asfortranarray(np.asarray(self.features, dtype=np.float64))
        if X.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        n, m = X.shape
        if n < 1 or m < 1:
            raise DataError("empty dataset")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature value")
        if self.task == CLASSIFICATION:
            y = np.asarray(self.targets)
            if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("classification targets must be integers")
            y = y.astype(np.int64)
            k = int(self.n_classes) if self.n_classes else int(y.max()) + 1
            if y.min() < 0 or y.max() >= k:
                raise DataError("class index out of range")
            object.__setattr__(self, "n_classes", k)
        else:
            y = np.asarray(self.targets, dtype=np.float64)
            if not np.all(np.isfinite(y)):
                raise DataError("non-finite target value")
            object.__setattr__(self, "n_classes", 0)
        if y.shape != (n,):
            raise DataError("targets must be a vector with one entry per row")
        if self.feature_names is not None and len(self.feature_names) != m:
            raise DataError("feature_names length does not match the feature count")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_classification(self) -> bool:
        return self.task == CLASSIFICATION

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.features[rows],
            self.targets[rows],
            self.task,
            self.n_classes,
            self.feature_names,
            self.class_labels,
            self.label_name,
        )

    def full_view(self) -> "NodeView":
        return NodeView(self, np.arange(self.n_samples), np.arange(self.n_features))


@dataclass(frozen=True, eq=False)
class NodeView:
    """Row and feature index sets into a dataset.  Rows may repeat."""

    dataset: Dataset
    rows: np.ndarray
    features: np.ndarray = field(default=None)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        feats = self.features
        feats = np.arange(self.dataset.n_features) if feats is None else feats
        feats = np.asarray(feats, dtype=np.int64)
        if rows.ndim != 1 or feats.ndim != 1:
            raise DataError("index sets must be vectors")
        n, m = self.dataset.features.shape
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise DataError("row index out of bounds")
        if feats.size and (feats.min() < 0 or feats.max() >= m):
            raise DataError("feature index out of bounds")
        if np.unique(feats).size != feats.size:
            raise DataError("feature indices must be distinct")
        rows.flags.writeable = False
        feats.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return self.rows.size

    @property
    def m(self) -> int:
        return self.features.size

    def targets(self) -> np.ndarray:
        return self.dataset.targets[self.rows]

    def column(self, feature: int) -> np.ndarray:
        return self.dataset.features[self.rows, feature]

    def with_features(self, features) -> "NodeView":
        return NodeView(self.dataset, self.rows, features)

    def with_rows(self, rows) -> "NodeView":
        return NodeView(self.dataset, rows, self.features)


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = CLASSIFICATION
    n_samples: int = 1000
    n_features: int = 10
    n_informative: int = 2
    noise_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in TASKS:
            raise DataError(f"unknown synthetic kind {self.kind!r}")
        if self.n_samples < 1 or self.n_features < 1:
            raise DataError("n_samples and n_features must be positive")
        if not 0 <= self.n_informative <= self.n_features:
            raise DataError("n_informative must lie in [0, n_features]")
        if not self.noise_scale >= 0:
            raise DataError("noise_scale must be non-negative")


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} at row {row}, column {col!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r} at row {row}, column {col!r}")
    return value


def load_csv(path, label_column: str | int = "y", task: str = CLASSIFICATION) -> Dataset:
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Class labels are mapped to dense indices in first-appearance order.
    """
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}")
    if not os.path.isfile(path):
        raise DataError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError("empty dataset")
        header = [h.strip() for h in header]
        if isinstance(label_column, str) and label_column in header:
            label_idx = header.index(label_column)
        elif isinstance(label_column, int) or str(label_column).lstrip("-").isdigit():
            idx = int(label_column)
            if not -len(header) <= idx < len(header):
                raise DataError(f"unknown label column: {label_column}")
            label_idx = idx % len(header)
        else:
            raise DataError(f"unknown label column: {label_column}")
        if len(header) < 2:
            raise DataError("no feature columns besides the label")
        names = [h for i, h in enumerate(header) if i != label_idx]
        feats: list[list[float]] = []
        raw_labels: list[str] = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"row {lineno} has {len(rec)} fields, expected {len(header)}")
            raw_labels.append(rec[label_idx].strip())
            feats.append([_parse_float(c, lineno, header[i]) for i, c in enumerate(rec) if i != label_idx])
    if not feats:
        raise DataError("empty dataset")
    X = np.array(feats, dtype=np.float64)
    if task == CLASSIFICATION:
        mapping: dict[str, int] = {}
        for lab in raw_labels:
            if lab == "":
                raise DataError("missing label value")
            mapping.setdefault(lab, len(mapping))
        y = np.array([mapping[lab] for lab in raw_labels], dtype=np.int64)
        return Dataset(X, y, CLASSIFICATION, len(mapping), tuple(names), tuple(mapping), header[label_idx])
    y = np.array([_parse_float(lab, i + 2, header[label_idx]) for i, lab in enumerate(raw_labels)])
    return Dataset(X, y, REGRESSION, 0, tuple(names), None, header[label_idx])


def write_csv(d: Dataset, path) -> None:
    """Write ``d`` with its label as the last column (``repr`` floats round-trip)."""
    names = list(d.feature_names) if d.feature_names else [f"x{i}" for i in range(d.n_features)]
    label = d.label_name or "y"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + [label])
        for i in range(d.n_samples):
            if d.is_classification:
                t = int(d.targets[i])
                lab = d.class_labels[t] if d.class_labels else str(t)
            else:
                lab = repr(float(d.targets[i]))
            w.writerow([repr(float(v)) for v in d.features[i]] + [lab])


def train_test_split(d: Dataset, test_fraction: float = 0.1, seed=0) -> tuple[Dataset, Dataset]:
    """Disjoint random partition with ``ceil(N * test_fraction)`` test rows."""
    if not 0 < test_fraction < 1:
        raise DataError("test_fraction must lie in (0, 1)")
    n = d.n_samples
    n_test = math.ceil(n * test_fraction - 1e-9)
    if n_test < 1 or n_test >= n:
        raise DataError("split leaves one side empty")
    perm = as_rng(seed).permutation(n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return d.subset(train_rows), d.subset(test_rows)


def bootstrap_sample(d: Dataset, seed=0) -> NodeView:
    """N row indices drawn uniformly with replacement; all features."""
    n = d.n_samples
    rows = as_rng(seed).integers(0, n, size=n)
    return NodeView(d, rows, np.arange(d.n_features))


def patch_subsample(d: Dataset, alpha_n: float, alpha_f: float, seed=0) -> NodeView:
    """One random patch of ``floor(alpha_n N)`` rows and ``floor(alpha_f M)`` features."""
    if not (0 < alpha_n <= 1 and 0 < alpha_f <= 1):
        raise DataError("patch fractions must lie in (0, 1]")
    n_rows = math.floor(alpha_n * d.n_samples + 1e-9)
    n_feats = math.floor(alpha_f * d.n_features + 1e-9)
    if n_rows < 1 or n_feats < 1:
        raise DataError("patch has zero rows or zero features")
    rng = as_rng(seed)
    rows = np.sort(rng.choice(d.n_samples, size=n_rows, replace=False))
    feats = np.sort(rng.choice(d.n_features, size=n_feats, replace=False))
    return NodeView(d, rows, feats)


def default_subspace_size(m: int) -> int:
    return max(1, math.ceil(math.sqrt(m)))


def feature_subspace(node: NodeView, count: int | None = None, seed=0) -> np.ndarray:
    """Distinct feature indices drawn uniformly from the node's features."""
    m = node.m
    if count is None:
        count = default_subspace_size(m)
    if not 1 <= count <= m:
        raise DataError(f"feature count {count} outside [1, {m}]")
    return np.sort(as_rng(seed).choice(node.features, size=count, replace=False))


def make_synthetic_with_truth(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Random linear model plus the (sorted) indices of its informative columns.

    ``n_informative`` columns drive the target with coefficients drawn from
    U[1, 10]; the rest are i.i.d. standard normal noise.  Column positions
    are shuffled, so informative features sit at random indices.
    Classification labels threshold the noisy score at its median and are
    numbered in first-appearance order.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n_samples, spec.n_features))
    coef = rng.uniform(1.0, 10.0, size=spec.n_informative)
    score = X[:, : spec.n_informative] @ coef
    score = score + spec.noise_scale * rng.standard_normal(spec.n_samples)
    order = rng.permutation(spec.n_features)
    X = X[:, order]
    informative = np.sort(np.flatnonzero(order < spec.n_informative))
    names = tuple(f"x{i}" for i in range(spec.n_features))
    if spec.kind == REGRESSION:
        return Dataset(X, score, REGRESSION, 0, names), informative
    y = (score > np.median(score)).astype(np.int64)
    if y[0] == 1:
        y = 1 - y
    return Dataset(X, y, CLASSIFICATION, 2, names), informative


def make_synthetic(spec: SyntheticSpec) -> Dataset:
    """Seeded synthetic dataset; see :func:`make_synthetic_with_truth`."""
    return make_synthetic_with_truth(spec)[0]


def class_distribution(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(np.asarray(y, dtype=np.int64), minlength=n_classes).astype(np.float64)
    return counts / counts.sum()

