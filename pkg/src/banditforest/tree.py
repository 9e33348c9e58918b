"""Top-down decision-tree construction over any of the split solvers."""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import NodeView, default_subspace_size, feature_subspace
from .histogram import EQUAL_WIDTH, STRATEGIES, BudgetExhausted, InsertionLedger
from .impurity import CLASSIFICATION_KINDS, GINI, MSE, check_kind, impurity_from_targets
from .splitter import (
    DEFAULT_BINS,
    DEFAULT_MIN_IMPURITY_DECREASE,
    SAMPLING,
    SOLVERS,
    WITHOUT_REPLACEMENT,
    SolverConfig,
    node_edges,
    solve,
)

SUBSAMPLE_RULES = ("sqrt", "all")
BIN_RULES = ("sqrt", "m")


@dataclass
class TreeConfig:
    """Tree growth settings.

    ``feature_subsample`` is ``"sqrt"``, ``"all"`` or a fixed count.
    ``bins_T`` is a fixed threshold count or a rule in terms of the dataset
    width M: ``"sqrt"`` gives ceil(sqrt(M)), ``"m"`` gives M.
    """

    max_depth: int | None = None
    max_leaf_nodes: int | None = None
    min_impurity_decrease: float = DEFAULT_MIN_IMPURITY_DECREASE
    feature_subsample: str | int = "sqrt"
    edge_strategy: str = EQUAL_WIDTH
    bins_T: int | str = DEFAULT_BINS
    solver: str = "mabsplit"
    impurity: str = GINI
    seed: int = 0
    batch_size: int | None = None
    delta: float | None = None
    sampling: str = WITHOUT_REPLACEMENT

    def validate(self) -> None:
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 1:
            raise ValueError("max_leaf_nodes must be at least 1")
        if self.min_impurity_decrease < 0:
            raise ValueError("min_impurity_decrease must be non-negative")
        if self.max_depth is None and self.max_leaf_nodes is None and self.min_impurity_decrease == 0:
            raise ValueError("no stopping rule: set max_depth, max_leaf_nodes or min_impurity_decrease")
        fs = self.feature_subsample
        if isinstance(fs, str):
            if fs not in SUBSAMPLE_RULES:
                raise ValueError(f"unknown feature_subsample {fs!r}")
        elif int(fs) < 1:
            raise ValueError("feature_subsample count must be positive")
        if self.edge_strategy not in STRATEGIES:
            raise ValueError(f"unknown edge strategy {self.edge_strategy!r}")
        if isinstance(self.bins_T, str):
            if self.bins_T not in BIN_RULES:
                raise ValueError(f"unknown bins rule {self.bins_T!r}")
        elif int(self.bins_T) < 1:
            raise ValueError("bins_T must be positive")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}")
        check_kind(self.impurity)
        if self.sampling not in SAMPLING:
            raise ValueError(f"unknown sampling mode {self.sampling!r}")

    def resolve_bins(self, n_features: int) -> int:
        if self.bins_T == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        if self.bins_T == "m":
            return n_features
        return int(self.bins_T)

    def resolve_subsample(self, m: int) -> int:
        fs = self.feature_subsample
        if fs == "sqrt":
            return default_subspace_size(m)
        if fs == "all":
            return m
        return min(int(fs), m)

    def solver_config(self, rng) -> SolverConfig:
        return SolverConfig(self.batch_size, self.delta, self.sampling, self.min_impurity_decrease, rng)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TreeNode:
    n_samples: int
    prediction: np.ndarray | float
    impurity: float
    depth: int
    feature_index: int | None = None
    threshold_value: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    impurity_decrease: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        base = {"n": self.n_samples, "impurity": self.impurity}
        if self.is_leaf:
            pred = self.prediction
            base["leaf"] = [float(p) for p in pred] if isinstance(pred, np.ndarray) else float(pred)
            return base
        base.update(
            feature=self.feature_index,
            threshold=self.threshold_value,
            impurity_decrease=self.impurity_decrease,
            left=self.left.to_dict(),
            right=self.right.to_dict(),
        )
        return base

    @classmethod
    def from_dict(cls, doc: dict, depth: int = 0) -> "TreeNode":
        if "leaf" in doc:
            leaf = doc["leaf"]
            pred = np.asarray(leaf, dtype=np.float64) if isinstance(leaf, list) else float(leaf)
            return cls(doc["n"], pred, doc["impurity"], depth)
        node = cls(doc["n"], None, doc["impurity"], depth, doc["feature"], doc["threshold"],
                   impurity_decrease=doc["impurity_decrease"])
        node.left = cls.from_dict(doc["left"], depth + 1)
        node.right = cls.from_dict(doc["right"], depth + 1)
        return node


@dataclass
class DecisionTree:
    """A fitted tree.  Prediction runs on a flattened array form."""

    root: TreeNode
    config: TreeConfig
    n_features: int
    n_classes: int
    insertions_used: int = 0
    nodes_split: int = 0
    budget_exhausted: bool = False
    _flat: tuple = field(default=None, repr=False, compare=False)

    @property
    def classification(self) -> bool:
        return self.n_classes > 0

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def internal_nodes(self):
        return (n for n in self.nodes() if not n.is_leaf)

    @property
    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes() if n.is_leaf)

    @property
    def depth(self) -> int:
        return max(n.depth for n in self.nodes())

    def _flatten(self):
        if self._flat is None:
            feats, thrs, lefts, rights, values = [], [], [], [], []
            order = {}
            for node in self.nodes():
                order[id(node)] = len(feats)
                feats.append(-1 if node.is_leaf else node.feature_index)
                thrs.append(np.nan if node.is_leaf else node.threshold_value)
                values.append(node.prediction if node.is_leaf else None)
                lefts.append(node.left)
                rights.append(node.right)
            width = self.n_classes if self.classification else 1
            vals = np.zeros((len(feats), width))
            for i, v in enumerate(values):
                if v is not None:
                    vals[i] = v
            left = np.array([order[id(c)] if c is not None else -1 for c in lefts], dtype=np.int64)
            right = np.array([order[id(c)] if c is not None else -1 for c in rights], dtype=np.int64)
            self._flat = (np.array(feats, dtype=np.int64), np.array(thrs), left, right, vals)
        return self._flat

    def apply(self, X) -> np.ndarray:
        """Flattened leaf index reached by each row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        feat, thr, left, right, _ = self._flatten()
        idx = np.zeros(X.shape[0], dtype=np.int64)
        live = np.flatnonzero(feat[idx] >= 0)
        while live.size:
            cur = idx[live]
            go_left = X[live, feat[cur]] < thr[cur]
            idx[live] = np.where(go_left, left[cur], right[cur])
            live = live[feat[idx[live]] >= 0]
        return idx

    def predict_values(self, X) -> np.ndarray:
        """Leaf payloads: ``(rows, K)`` probabilities or ``(rows,)`` means."""
        vals = self._flatten()[4][self.apply(X)]
        return vals if self.classification else vals[:, 0]

    def predict(self, row):
        """Payload for a single feature vector."""
        row = np.asarray(row, dtype=np.float64)
        if row.ndim != 1:
            raise ValueError("predict takes one feature vector")
        return self.predict_values(row[None, :])[0]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "insertions_used": self.insertions_used,
            "nodes_split": self.nodes_split,
            "budget_exhausted": self.budget_exhausted,
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DecisionTree":
        return cls(
            TreeNode.from_dict(doc["root"]),
            TreeConfig(**doc["config"]),
            doc["n_features"],
            doc["n_classes"],
            doc["insertions_used"],
            doc["nodes_split"],
            doc["budget_exhausted"],
        )


def _leaf_payload(y: np.ndarray, kind: str, n_classes: int):
    if kind == MSE:
        return float(y.mean())
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    return counts / counts.sum()


def _is_pure(y: np.ndarray) -> bool:
    return y.size == 0 or bool(np.all(y == y[0]))


def node_rng(seed: int, heap_id: int) -> np.random.Generator:
    """Per-node stream, so a node's draws do not depend on which solver ran elsewhere."""
    return np.random.default_rng(np.random.SeedSequence([seed, heap_id]))


def fit_tree(node_view: NodeView, config: TreeConfig, ledger: InsertionLedger | None = None) -> DecisionTree:
    """Grow a tree on ``node_view``.

    Depth-first preorder by default; best-first (largest estimated impurity
    decrease first) when ``max_leaf_nodes`` is set.  A ``BudgetExhausted``
    raised by any split leaves that node as a leaf and halts the tree.
    """
    config.validate()
    if node_view.n == 0:
        raise ValueError("empty node view")
    kind = config.impurity
    data = node_view.dataset
    if (kind in CLASSIFICATION_KINDS) != data.is_classification:
        raise ValueError(f"impurity {kind!r} does not match a {data.task} dataset")
    ledger = ledger if ledger is not None else InsertionLedger()
    K = data.n_classes
    T = config.resolve_bins(data.n_features)
    X = data.features

    def make_node(rows, depth):
        y = data.targets[rows]
        return TreeNode(rows.size, _leaf_payload(y, kind, K), impurity_from_targets(kind, y, K), depth)

    state = {"insertions": 0, "splits": 0, "halted": False}

    def evaluate(node: TreeNode, rows, heap_id):
        """Solver result for ``node``, or None if it must stay a leaf."""
        if state["halted"] or rows.size < 2 or node.impurity <= 0 or _is_pure(data.targets[rows]):
            return None
        if config.max_depth is not None and node.depth >= config.max_depth:
            return None
        rng = node_rng(config.seed, heap_id)
        view = NodeView(data, rows, node_view.features)
        feats = feature_subspace(view, config.resolve_subsample(view.m), rng)
        view = view.with_features(feats)
        edges = node_edges(view, config.edge_strategy, T, rng)
        try:
            res = solve(config.solver, view, kind, edges, config.solver_config(rng), ledger)
        except BudgetExhausted as exc:
            state["insertions"] += getattr(exc, "insertions_used", 0)
            state["halted"] = True
            return None
        state["insertions"] += res.insertions_used
        return res if res.best is not None else None

    def apply_split(node, rows, res):
        f, thr = res.best.feature_index, res.threshold
        mask = X[rows, f] < thr
        node.feature_index, node.threshold_value = int(f), float(thr)
        node.impurity_decrease = -res.reduction
        node.left = make_node(rows[mask], node.depth + 1)
        node.right = make_node(rows[~mask], node.depth + 1)
        state["splits"] += 1
        return rows[mask], rows[~mask]

    rows0 = np.asarray(node_view.rows, dtype=np.int64)
    root = make_node(rows0, 0)

    if config.max_leaf_nodes is None:
        stack = [(root, rows0, 1)]
        while stack:
            node, rows, hid = stack.pop()
            res = evaluate(node, rows, hid)
            if res is None:
                continue
            lrows, rrows = apply_split(node, rows, res)
            stack.append((node.right, rrows, 2 * hid + 1))
            stack.append((node.left, lrows, 2 * hid))
    else:
        leaves = 1
        heap = []
        counter = 0

        def push(node, rows, hid):
            nonlocal counter
            if leaves >= config.max_leaf_nodes:
                return
            res = evaluate(node, rows, hid)
            if res is not None:
                heapq.heappush(heap, (res.reduction, counter, node, rows, hid, res))
                counter += 1

        push(root, rows0, 1)
        while heap and leaves < config.max_leaf_nodes and not state["halted"]:
            _, _, node, rows, hid, res = heapq.heappop(heap)
            lrows, rrows = apply_split(node, rows, res)
            leaves += 1
            if leaves >= config.max_leaf_nodes:
                break
            push(node.left, lrows, 2 * hid)
            push(node.right, rrows, 2 * hid + 1)

    return DecisionTree(root, config, data.n_features, K, state["insertions"], state["splits"], state["halted"])
