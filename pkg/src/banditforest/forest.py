"""Random Forest, ExtraTrees and Random Patches ensembles with soft voting,
OOB bookkeeping and insertion-budgeted training."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import Dataset, NodeView, patch_subsample
from .histogram import RANDOM_UNIFORM, InsertionLedger
from .impurity import CLASSIFICATION_KINDS, GINI, MSE
from .tree import DecisionTree, TreeConfig, fit_tree

RF = "rf"
EXTRA_TREES = "extra_trees"
RANDOM_PATCHES = "random_patches"
FOREST_KINDS = (RF, EXTRA_TREES, RANDOM_PATCHES)


@dataclass
class ForestConfig:
    kind: str = RF
    n_trees: int = 100
    tree: TreeConfig = field(default_factory=TreeConfig)
    budget: int | None = None
    seed: int = 0
    alpha_n: float = 0.7
    alpha_f: float = 0.85
    n_jobs: int = 1

    def validate(self) -> None:
        if self.kind not in FOREST_KINDS:
            raise ValueError(f"unknown forest kind {self.kind!r}")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.n_trees < 1 and self.budget is None:
            raise ValueError("n_trees must be at least 1")
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if self.kind == RANDOM_PATCHES and not (0 < self.alpha_n <= 1 and 0 < self.alpha_f <= 1):
            raise ValueError("patch fractions must lie in (0, 1]")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be at least 1")
        self.tree.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestConfig":
        doc = dict(doc)
        doc["tree"] = TreeConfig(**doc.get("tree", {}))
        return cls(**doc)


@dataclass
class Forest:
    """Fitted ensemble.

    ``samples[i]`` holds the training rows tree ``i`` was fitted on (a
    bootstrap draw, possibly with repeats).  ``fallback`` is the training
    marginal used when there are no trees.
    """

    trees: list[DecisionTree]
    samples: list[np.ndarray]
    config: ForestConfig
    n_samples: int
    n_features: int
    n_classes: int
    fallback: np.ndarray | float
    completed_trees: int
    insertions_used: int
    wall_time_ms: float = 0.0
    patch_rows: np.ndarray | None = None
    patch_features: np.ndarray | None = None

    @property
    def classification(self) -> bool:
        return self.n_classes > 0

    def _check(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def predict_values(self, X) -> np.ndarray:
        """Soft-vote probabilities ``(rows, K)`` or mean predictions ``(rows,)``."""
        X = self._check(X)
        if not self.trees:
            if self.classification:
                return np.tile(self.fallback, (X.shape[0], 1))
            return np.full(X.shape[0], self.fallback)
        acc = self.trees[0].predict_values(X).copy()
        for t in self.trees[1:]:
            acc += t.predict_values(X)
        return acc / len(self.trees)

    def predict(self, X) -> np.ndarray:
        """Class labels (argmax, lowest index on ties) or regression means."""
        vals = self.predict_values(X)
        return np.argmax(vals, axis=1) if self.classification else vals

    def predict_row(self, row):
        row = np.asarray(row, dtype=np.float64)
        if row.ndim != 1:
            raise ValueError("predict_row takes one feature vector")
        return self.predict_values(row[None, :])[0]

    def metrics(self) -> dict:
        return {
            "insertions_used": int(self.insertions_used),
            "completed_trees": int(self.completed_trees),
            "wall_time_ms": float(self.wall_time_ms),
        }

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
            "metrics": self.metrics(),
        }


def tree_seed_sequence(forest_seed: int, tree_index: int) -> np.random.SeedSequence:
    """Independent stream per tree; adding trees never changes earlier ones."""
    return np.random.SeedSequence([forest_seed, tree_index])


def effective_tree_config(kind: str, tree: TreeConfig, classification: bool) -> TreeConfig:
    """Per-variant overrides.  ExtraTrees uses random bin edges, sqrt(M)
    features and thresholds for classification and all M for regression."""
    if kind == EXTRA_TREES:
        rule = "sqrt" if classification else "m"
        return replace(tree, edge_strategy=RANDOM_UNIFORM, bins_T=rule,
                       feature_subsample="sqrt" if classification else "all")
    return tree


def training_marginal(d: Dataset):
    if d.is_classification:
        counts = np.bincount(d.targets, minlength=d.n_classes).astype(np.float64)
        return counts / counts.sum()
    return float(d.targets.mean())


def _check_task(d: Dataset, tree: TreeConfig):
    if (tree.impurity in CLASSIFICATION_KINDS) != d.is_classification:
        raise ValueError(f"impurity {tree.impurity!r} does not match a {d.task} dataset")


def _plan(d: Dataset, config: ForestConfig):
    """Tree config, per-tree (rows, features, seed) generator, and patch."""
    tcfg = effective_tree_config(config.kind, config.tree, d.is_classification)
    patch = None
    if config.kind == RANDOM_PATCHES:
        ss = np.random.SeedSequence(config.seed, spawn_key=(0,))
        patch = patch_subsample(d, config.alpha_n, config.alpha_f, np.random.default_rng(ss))

    def job(i: int):
        ss = tree_seed_sequence(config.seed, i)
        rng = np.random.default_rng(ss)
        tree_seed = int(ss.generate_state(1, np.uint32)[0])
        if patch is None:
            rows = rng.integers(0, d.n_samples, size=d.n_samples)
            feats = None
        else:
            rows = patch.rows[rng.integers(0, patch.n, size=patch.n)]
            feats = patch.features
        return rows, feats, replace(tcfg, seed=tree_seed)

    return job, patch


def fit_forest(d: Dataset, config: ForestConfig) -> Forest:
    """Fit ``config.n_trees`` trees; dispatches to budget mode when a cap is set."""
    config.validate()
    if config.budget is not None:
        return fit_forest_with_budget(d, config)
    _check_task(d, config.tree)
    start = time.perf_counter()
    job, patch = _plan(d, config)
    ledger = InsertionLedger()

    def build(i):
        rows, feats, tcfg = job(i)
        return rows, fit_tree(NodeView(d, rows, feats), tcfg, ledger)

    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            built = list(pool.map(build, range(config.n_trees)))
    else:
        built = [build(i) for i in range(config.n_trees)]
    trees = [t for _, t in built]
    return Forest(
        trees,
        [r for r, _ in built],
        config,
        d.n_samples,
        d.n_features,
        d.n_classes,
        training_marginal(d),
        len(trees),
        sum(t.insertions_used for t in trees),
        (time.perf_counter() - start) * 1e3,
        None if patch is None else patch.rows,
        None if patch is None else patch.features,
    )


def fit_forest_with_budget(d: Dataset, config: ForestConfig) -> Forest:
    """Train trees one after another against a shared capped ledger.

    The tree that hits the cap keeps whatever splits it finished and still
    votes, but is not counted in ``completed_trees``; an interrupted tree
    that never split is dropped.  Training continues until the cap is hit
    or ``n_trees`` are built.
    """
    config.validate()
    if config.budget is None:
        raise ValueError("budget mode needs a budget")
    _check_task(d, config.tree)
    start = time.perf_counter()
    job, patch = _plan(d, config)
    ledger = InsertionLedger(config.budget)
    trees, samples = [], []
    completed = 0
    for i in range(config.n_trees):
        rows, feats, tcfg = job(i)
        tree = fit_tree(NodeView(d, rows, feats), tcfg, ledger)
        if tree.budget_exhausted:
            if tree.nodes_split > 0:
                trees.append(tree)
                samples.append(rows)
            break
        trees.append(tree)
        samples.append(rows)
        completed += 1
    return Forest(
        trees,
        samples,
        config,
        d.n_samples,
        d.n_features,
        d.n_classes,
        training_marginal(d),
        completed,
        ledger.total_insertions,
        (time.perf_counter() - start) * 1e3,
        None if patch is None else patch.rows,
        None if patch is None else patch.features,
    )


def predict_forest(f: Forest, row):
    return f.predict_row(row)


def oob_indices(f: Forest, tree_index: int) -> np.ndarray:
    """Training rows absent from tree ``tree_index``'s bootstrap sample."""
    if f.config.kind == RANDOM_PATCHES:
        raise ValueError("out-of-bag rows are undefined for random-patch trees")
    if not 0 <= tree_index < len(f.trees):
        raise IndexError(f"tree index {tree_index} out of range")
    return np.setdiff1d(np.arange(f.n_samples), f.samples[tree_index])


def default_impurity(d: Dataset) -> str:
    return GINI if d.is_classification else MSE


def error_rate(f_or_tree, X, y, classification: bool) -> float:
    vals = f_or_tree.predict_values(X)
    if classification:
        return float(np.mean(np.argmax(vals, axis=1) != y))
    return float(np.mean((vals - y) ** 2))
