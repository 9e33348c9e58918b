"""Feature importance, selection stability, sample-complexity scaling fits and
the per-arm pull-count bound replay."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, NodeView, as_rng
from .forest import Forest, error_rate, oob_indices
from .impurity import MSE
from .splitter import (
    SolverConfig,
    naive_objectives,
    node_edges,
    record_pull_counts,
    solve_exact,
    solve_mabsplit,
    solve_naive,
)

MDI = "mdi"
PERMUTATION_OOB = "permutation_oob"
IMPORTANCE_METHODS = (MDI, PERMUTATION_OOB)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


class _Report:
    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), default=_jsonable, **kw)


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores, ties broken toward lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 1 <= k <= scores.size:
        raise ValueError(f"k={k} outside [1, {scores.size}]")
    order = np.lexsort((np.arange(scores.size), -scores))
    return np.sort(order[:k])


@dataclass
class ImportanceReport(_Report):
    method: str
    scores: np.ndarray
    top_k: np.ndarray
    std_errors: np.ndarray | None = None

    @property
    def k(self) -> int:
        return int(self.top_k.size)


def mdi_importance(forest: Forest, k: int = 5, weighted: bool = False) -> ImportanceReport:
    """Mean impurity decrease over every internal node, in every tree, that
    splits on each feature.  Features never chosen score 0.

    ``weighted=True`` scales each node's decrease by its share of the
    tree's training rows, which damps splits of tiny nodes.
    """
    M = forest.n_features
    total = np.zeros(M)
    count = np.zeros(M, dtype=np.int64)
    for tree in forest.trees:
        n_root = tree.root.n_samples
        for node in tree.internal_nodes():
            dec = max(node.impurity_decrease, 0.0)
            if weighted:
                dec *= node.n_samples / n_root
            total[node.feature_index] += dec
            count[node.feature_index] += 1
    scores = np.divide(total, count, out=np.zeros(M), where=count > 0)
    return ImportanceReport(MDI, scores, top_k(scores, min(k, M)))


def permutation_importance_oob(forest: Forest, d: Dataset, seed=0, k: int = 5, permute=None) -> ImportanceReport:
    """OOB error increase when one feature is shuffled across a tree's OOB rows.

    Per-tree differences are averaged over trees with a non-empty OOB set.
    ``permute(rng, n)`` overrides the shuffle (an identity permutation gives
    exactly zero importance).
    """
    if d.n_samples != forest.n_samples or d.n_features != forest.n_features:
        raise ValueError("dataset does not match the forest's training data")
    rng = as_rng(seed)
    permute = permute or (lambda r, n: r.permutation(n))
    M = d.n_features
    diffs = []
    for i, tree in enumerate(forest.trees):
        oob = oob_indices(forest, i)
        if oob.size == 0:
            continue
        X = d.features[oob]
        y = d.targets[oob]
        base = error_rate(tree, X, y, forest.classification)
        row = np.empty(M)
        for f in range(M):
            Xp = X.copy()
            Xp[:, f] = X[permute(rng, oob.size), f]
            row[f] = error_rate(tree, Xp, y, forest.classification) - base
        diffs.append(row)
    if not diffs:
        raise ValueError("every tree has an empty out-of-bag set")
    diffs = np.asarray(diffs)
    scores = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(len(diffs)) if len(diffs) > 1 else np.zeros(M)
    return ImportanceReport(PERMUTATION_OOB, scores, top_k(scores, min(k, M)), se)


@dataclass
class StabilityReport(_Report):
    selection_matrix: np.ndarray
    k: int
    stability: float


def selection_matrix(selections, n_features: int) -> np.ndarray:
    Z = np.zeros((len(selections), n_features), dtype=np.int64)
    for r, sel in enumerate(selections):
        Z[r, np.asarray(sel, dtype=np.int64)] = 1
    return Z


def nogueira_stability(matrix, k: int | None = None) -> float:
    """Variance-ratio stability of a Z x M binary selection matrix.

    1 minus the mean (over features) unbiased variance of the selection
    indicator, divided by (k/M)(1 - k/M).
    """
    Z = np.asarray(matrix)
    if Z.ndim != 2 or Z.shape[0] < 2:
        raise ValueError("need at least two selection runs")
    if not np.isin(Z, (0, 1)).all():
        raise ValueError("selection matrix must be binary")
    sizes = Z.sum(axis=1)
    if k is None:
        k = int(sizes[0])
    if np.any(sizes != k):
        raise ValueError(f"every run must select exactly k={k} features")
    M = Z.shape[1]
    if not 0 < k < M:
        raise ValueError("stability is undefined for k equal to 0 or M")
    p = k / M
    return float(1.0 - Z.var(axis=0, ddof=1).mean() / (p * (1 - p)))


def stability_report(selections, n_features: int, k: int) -> StabilityReport:
    Z = selection_matrix(selections, n_features)
    return StabilityReport(Z, k, nogueira_stability(Z, k))


@dataclass
class Fit(_Report):
    intercept: float
    slope: float
    r2: float


def least_squares_fit(x, y) -> Fit:
    """Closed-form fit of ``y ~ a + b x``.  R^2 is 0 for a constant response."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return Fit(float(a), float(b), 0.0)
    ss_res = float(np.sum((y - (a + b * x)) ** 2))
    return Fit(float(a), float(b), 1.0 - ss_res / ss_tot)


@dataclass
class ScalingReport(_Report):
    subset_sizes: list[int]
    samples_per_split: list[float]
    samples_std: list[float]
    linear_fit: Fit
    log_fit: Fit
    per_seed: list[list[int]] = field(default_factory=list)
    insertions_per_split: list[float] = field(default_factory=list)

    @property
    def linear_fit_r2(self) -> float:
        return self.linear_fit.r2

    @property
    def log_fit_r2(self) -> float:
        return self.log_fit.r2

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["linear_fit_r2"] = self.linear_fit_r2
        doc["log_fit_r2"] = self.log_fit_r2
        return doc

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "mean_samples", "std_samples"])
            for n, mu, sd in zip(self.subset_sizes, self.samples_per_split, self.samples_std):
                w.writerow([n, repr(float(mu)), repr(float(sd))])


def _root_view(d: Dataset, size: int, rng, replace: bool) -> NodeView:
    if not replace and size > d.n_samples:
        raise ValueError(f"subset size {size} exceeds the {d.n_samples} available rows")
    rows = rng.integers(0, d.n_samples, size=size) if replace else rng.choice(d.n_samples, size, replace=False)
    return NodeView(d, rows)


def scaling_experiment(d: Dataset, subset_sizes, seeds, solver_config: SolverConfig | None = None,
                       kind: str | None = None, solver: str = "mabsplit", T: int = 32,
                       replace: bool = True) -> ScalingReport:
    """Samples a single root split consumes as the node grows.

    For each size and seed: subsample rows, solve the root split, record
    ``samples_used``; then fit the per-size means linearly and against
    ``ln n``.
    """
    sizes = [int(s) for s in subset_sizes]
    if len(sizes) < 3:
        raise ValueError("need at least three subset sizes")
    if any(s < 2 for s in sizes):
        raise ValueError("subset sizes must be at least 2")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    kind = kind or ("gini" if d.is_classification else MSE)
    base = solver_config or SolverConfig()
    per_size, per_size_ins = [], []
    for n in sizes:
        used, ins = [], []
        for s in seeds:
            rng = np.random.default_rng(np.random.SeedSequence([int(s), n]))
            view = _root_view(d, n, rng, replace)
            edges = node_edges(view, T=T)
            if solver == "mabsplit":
                cfg = SolverConfig(base.batch_size, base.delta, base.sampling, base.min_impurity_decrease, rng)
                res = solve_mabsplit(view, kind, edges, cfg)
            elif solver == "exact":
                res = solve_exact(view, kind, edges, None, base.min_impurity_decrease)
            elif solver == "naive":
                res = solve_naive(view, kind, edges, None, base.min_impurity_decrease)
            else:
                raise ValueError(f"unknown solver {solver!r}")
            used.append(res.samples_used)
            ins.append(res.insertions_used)
        per_size.append(used)
        per_size_ins.append(ins)
    arr = np.asarray(per_size, dtype=np.float64)
    means = arr.mean(axis=1)
    stds = arr.std(axis=1, ddof=1) if arr.shape[1] > 1 else np.zeros(len(sizes))
    x = np.asarray(sizes, dtype=np.float64)
    return ScalingReport(
        sizes,
        [float(v) for v in means],
        [float(v) for v in stds],
        least_squares_fit(x, means),
        least_squares_fit(np.log(x), means),
        [list(map(int, r)) for r in per_size],
        [float(np.mean(r)) for r in per_size_ins],
    )


@dataclass
class ArmBound(_Report):
    feature_index: int
    threshold_index: int
    gap: float
    measured_pulls: int
    bound: float


@dataclass
class TheoremBoundReport(_Report):
    arms: list[ArmBound]
    c0: float
    violations: int
    total_pulls: int
    bound_total: float
    n: int
    batch_size: int
    chose_optimum: bool

    @property
    def slack_bound(self) -> float:
        """Sum of per-arm bounds plus the 2 m T slack term."""
        return self.bound_total + 2 * len(self.arms)


def pull_bound(gap: float, c0: float, log_term: float, B: int, n: int) -> float:
    if gap <= 0:
        return 2.0 * n
    return min(4.0 * c0 * c0 / (gap * gap) * log_term + B, 2.0 * n)


def theorem_bound_check(node: NodeView, solver_config: SolverConfig | None = None, c0: float | None = None,
                        kind: str | None = None, edges=None) -> TheoremBoundReport:
    """Replay an instrumented bandit split against the per-arm pull bound.

    Gaps come from the brute-force oracle.  When ``c0`` is omitted it is
    calibrated from the run itself as the largest observed
    ``C * sqrt(n_used / log(1/delta))``.
    """
    kind = kind or ("gini" if node.dataset.is_classification else MSE)
    if c0 is not None and c0 <= 0:
        raise ValueError("c0 must be positive")
    edges = node_edges(node) if edges is None else edges
    arms, _, mus = naive_objectives(node, kind, edges)
    if not arms:
        raise ValueError("node has no candidate splits")
    cfg = solver_config or SolverConfig()
    cfg = SolverConfig(cfg.batch_size, cfg.delta, cfg.sampling, cfg.min_impurity_decrease, cfg.seed, instrument=True)
    res = solve_mabsplit(node, kind, edges, cfg)
    rec = res.pull_record
    pulls = record_pull_counts(res)
    if c0 is None:
        c0 = float(np.max(rec.ci_scale)) if rec.ci_scale.size else 0.0
        c0 = c0 if c0 > 0 else np.finfo(float).tiny
    gaps = np.maximum(mus - mus.min(), 0.0)
    n = node.n
    log_term = math.log(float(n) ** 2 * len(arms))
    out, violations = [], 0
    for arm, gap in zip(arms, gaps):
        b = pull_bound(float(gap), c0, log_term, rec.batch_size, n)
        p = pulls[arm]
        violations += int(p > b)
        out.append(ArmBound(arm.feature_index, arm.threshold_index, float(gap), p, b))
    best = arms[int(np.argmin(mus))]
    return TheoremBoundReport(
        out,
        float(c0),
        violations,
        int(sum(pulls.values()) + rec.fallback_pulls),
        float(sum(a.bound for a in out)),
        n,
        rec.batch_size,
        res.candidate == best or bool(np.isclose(mus[arms.index(res.candidate)], mus.min(), rtol=0, atol=1e-12)),
    )
