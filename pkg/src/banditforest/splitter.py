"""Node-splitting solvers: bandit-based (MABSplit), exact histogram scan and
the brute-force recount oracle.

All three share one calling convention::

    solve_*(node, kind, edges, ledger, ...) -> SplitResult

``edges`` is a list of :class:`BinEdges` aligned with ``node.features`` (or
``None`` for node-local equal-width bins).  Arms are ordered by global feature
index, then threshold index, and every argmin breaks ties toward the lowest
arm in that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .data import NodeView, as_rng
from .histogram import (
    EQUAL_WIDTH,
    BinEdges,
    BudgetExhausted,
    HistogramBank,
    InsertionLedger,
    make_edges,
)
from .impurity import (
    MSE,
    check_kind,
    finite_population_factor,
    impurity_from_targets,
    node_impurity,
    objective_variance,
    z_value,
)

WITH_REPLACEMENT = "with_replacement"
WITHOUT_REPLACEMENT = "without_replacement"
SAMPLING = (WITH_REPLACEMENT, WITHOUT_REPLACEMENT)

DEFAULT_MIN_IMPURITY_DECREASE = 0.005
DEFAULT_BINS = 32
# relative slack under which two objectives count as tied
TIE_RTOL = 1e-12


@dataclass(frozen=True, order=True)
class Arm:
    feature_index: int
    threshold_index: int


@dataclass
class SolverConfig:
    """Settings for :func:`solve_mabsplit`.

    ``batch_size`` defaults to ``max(2 T, 100)`` and ``delta`` to
    ``1 / (n^2 * number_of_arms)`` when left as ``None``.
    """

    batch_size: int | None = None
    delta: float | None = None
    sampling: str = WITHOUT_REPLACEMENT
    min_impurity_decrease: float = DEFAULT_MIN_IMPURITY_DECREASE
    seed: int | np.random.Generator = 0
    instrument: bool = False

    def __post_init__(self):
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.sampling not in SAMPLING:
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if self.min_impurity_decrease < 0:
            raise ValueError("min_impurity_decrease must be non-negative")


@dataclass
class PullRecord:
    """Per-arm instrumentation of one bandit run."""

    arms: list[Arm]
    pulls: np.ndarray
    fallback_pulls: int
    ci_scale: np.ndarray
    delta: float
    batch_size: int
    n: int


@dataclass
class SplitResult:
    """Outcome of one node split.

    ``best`` is ``None`` when the node is unsplittable or the winner fails
    the impurity-decrease gate; ``candidate`` keeps the winner either way.
    """

    best: Arm | None
    threshold: float | None
    mu: float
    reduction: float
    parent_impurity: float
    samples_used: int
    insertions_used: int
    candidate: Arm | None = None
    candidate_threshold: float | None = None
    fell_back_to_exact: bool = False
    exact: bool = True
    ci_half_width: float = 0.0
    arms_surviving_history: list[int] = field(default_factory=list)
    pull_record: PullRecord | None = None

    @property
    def split(self) -> bool:
        return self.best is not None


def node_edges(node: NodeView, strategy: str = EQUAL_WIDTH, T: int = DEFAULT_BINS, seed=0) -> list[BinEdges]:
    """Bin edges from each node feature's local min and max."""
    rng = as_rng(seed)
    X = node.dataset.features
    out = []
    for f in node.features:
        col = X[node.rows, f]
        out.append(make_edges(strategy, float(col.min()), float(col.max()), T, rng))
    return out


def _resolve_edges(node, edges):
    if edges is None:
        edges = node_edges(node)
    if len(edges) != node.m:
        raise ValueError("edges must align with node.features")
    return list(edges)


def _arm_layout(node: NodeView, edges: list[BinEdges]):
    """Splittable slots sorted by feature index, plus flat arm arrays."""
    order = np.argsort(node.features, kind="stable")
    slots = [int(i) for i in order if not edges[i].degenerate]
    columns = node.features[slots] if slots else np.empty(0, dtype=np.int64)
    arm_slot, arm_thr = [], []
    for pos, i in enumerate(slots):
        T = edges[i].T
        arm_slot.extend([pos] * T)
        arm_thr.extend(range(T))
    return slots, np.asarray(columns, dtype=np.int64), np.asarray(arm_slot, dtype=np.int64), np.asarray(arm_thr, dtype=np.int64)


def _tied_argmin(values: np.ndarray) -> int:
    lo = float(np.min(values))
    tol = TIE_RTOL * max(1.0, abs(lo))
    return int(np.flatnonzero(values <= lo + tol)[0])


def _parent_impurity(node: NodeView, kind: str) -> float:
    return impurity_from_targets(kind, node.targets(), node.dataset.n_classes)


def _n_classes(node: NodeView, kind: str) -> int:
    return 0 if kind == MSE else node.dataset.n_classes


def _gate(reduction: float, min_decrease: float) -> bool:
    return -reduction >= min_decrease


def _empty_result(parent: float, samples: int = 0, insertions: int = 0) -> SplitResult:
    return SplitResult(None, None, parent, 0.0, parent, samples, insertions)


def _finish(result: SplitResult, min_decrease: float, gate_reduction: float | None = None) -> SplitResult:
    g = result.reduction if gate_reduction is None else gate_reduction
    if not _gate(g, min_decrease):
        result.best = None
        result.threshold = None
    return result


def naive_objectives(node: NodeView, kind: str, edges=None):
    """Exact objective of every arm by recounting all ``n`` points per arm.

    Returns ``(arms, thresholds, mu)``; this is the O(m T n) oracle.
    """
    check_kind(kind)
    edges = _resolve_edges(node, edges)
    slots, columns, arm_slot, arm_thr = _arm_layout(node, edges)
    y = node.targets()
    n = y.size
    K = node.dataset.n_classes
    arms, thresholds, mus = [], [], []
    for pos, i in enumerate(slots):
        x = node.column(columns[pos])
        for j, t in enumerate(edges[i].edges):
            goes_left = x < t
            total = 0.0
            for side in (y[goes_left], y[~goes_left]):
                if side.size == 0:
                    continue
                if kind == MSE:
                    imp = float(np.mean((side - side.mean()) ** 2))
                else:
                    counts = np.bincount(side, minlength=K)
                    imp = node_impurity(kind, counts / side.size)
                total += side.size / n * imp
            arms.append(Arm(int(columns[pos]), j))
            thresholds.append(float(t))
            mus.append(total)
    return arms, np.asarray(thresholds), np.asarray(mus, dtype=np.float64)


def solve_naive(node: NodeView, kind: str, edges=None, ledger: InsertionLedger | None = None,
                min_impurity_decrease: float = DEFAULT_MIN_IMPURITY_DECREASE) -> SplitResult:
    """Brute-force split search; charges ``n`` point evaluations per arm."""
    check_kind(kind)
    ledger = ledger if ledger is not None else InsertionLedger()
    parent = _parent_impurity(node, kind)
    if node.n < 2:
        return _empty_result(parent)
    edges = _resolve_edges(node, edges)
    n_arms = sum(e.T for e in edges)
    if n_arms == 0:
        return _empty_result(parent)
    ledger.charge(node.n * n_arms)
    arms, thresholds, mus = naive_objectives(node, kind, edges)
    a = _tied_argmin(mus)
    mu = float(mus[a])
    res = SplitResult(arms[a], float(thresholds[a]), mu, mu - parent, parent, node.n, node.n * n_arms,
                      candidate=arms[a], candidate_threshold=float(thresholds[a]))
    return _finish(res, min_impurity_decrease)


def _side_arrays(bank: HistogramBank, slot_list, arm_pos, arm_thr, denom):
    left, right = bank.scan(slot_list)
    return left[arm_pos, arm_thr] / denom, right[arm_pos, arm_thr] / denom


def solve_exact(node: NodeView, kind: str, edges=None, ledger: InsertionLedger | None = None,
                min_impurity_decrease: float = DEFAULT_MIN_IMPURITY_DECREASE) -> SplitResult:
    """Insert every point into every splittable feature's histogram, then scan."""
    check_kind(kind)
    ledger = ledger if ledger is not None else InsertionLedger()
    parent = _parent_impurity(node, kind)
    if node.n < 2:
        return _empty_result(parent)
    edges = _resolve_edges(node, edges)
    slots, columns, arm_slot, arm_thr = _arm_layout(node, edges)
    if arm_slot.size == 0:
        return _empty_result(parent)
    y = node.targets()
    shift = float(y.mean()) if kind == MSE else 0.0
    bank = HistogramBank([edges[i] for i in slots], _n_classes(node, kind), shift)
    all_slots = np.arange(len(slots), dtype=np.int64)
    bank.insert(node.dataset.features, node.rows, all_slots, columns, y, ledger)
    left, right = _side_arrays(bank, None, arm_slot, arm_thr, node.n)
    mus, _ = objective_variance(kind, left, right)
    a = _tied_argmin(mus)
    arm = Arm(int(columns[arm_slot[a]]), int(arm_thr[a]))
    thr = float(edges[slots[arm_slot[a]]].edges[arm_thr[a]])
    mu = float(mus[a])
    res = SplitResult(arm, thr, mu, mu - parent, parent, node.n, node.n * len(slots),
                      candidate=arm, candidate_threshold=thr)
    return _finish(res, min_impurity_decrease)


def solve_mabsplit(node: NodeView, kind: str, edges=None, config: SolverConfig | None = None,
                   ledger: InsertionLedger | None = None, kernels=None) -> SplitResult:
    """Batched successive elimination over all (feature, threshold) arms.

    Each round inserts a batch into the histograms of features that still
    own an active arm, refreshes every active arm's estimate and confidence
    half-width, and drops arms whose lower bound exceeds the smallest upper
    bound.  The first batch is always drawn.  Survivors left once the node is
    exhausted are resolved exactly.  ``BudgetExhausted`` propagates with the
    insertions spent so far attached as ``exc.insertions_used``.
    """
    check_kind(kind)
    config = config or SolverConfig()
    ledger = ledger if ledger is not None else InsertionLedger()
    kern = kernels or _core.kernels
    parent = _parent_impurity(node, kind)
    n = node.n
    if n < 2:
        return _empty_result(parent)
    edges = _resolve_edges(node, edges)
    slots, columns, arm_slot, arm_thr = _arm_layout(node, edges)
    A = arm_slot.size
    if A == 0:
        return _empty_result(parent)

    without = config.sampling == WITHOUT_REPLACEMENT
    t_max = max(edges[i].T for i in slots)
    B = config.batch_size or max(2 * t_max, 100)
    delta = config.delta if config.delta is not None else 1.0 / (float(n) ** 2 * A)
    z = z_value(delta)
    log_inv_delta = math.log(1.0 / delta)
    rng = as_rng(config.seed)

    X = node.dataset.features
    rows = node.rows
    targets = node.dataset.targets
    bank = HistogramBank([edges[i] for i in slots], _n_classes(node, kind))
    perm = np.arange(n, dtype=np.int64)

    mu_hat = np.full(A, np.inf)
    ci = np.full(A, np.inf)
    active = np.ones(A, dtype=bool)
    deactivated_at = np.zeros(A, dtype=np.int64)
    ci_scale = np.zeros(A)
    history = [A]
    n_used = 0
    inserted = 0

    while True:
        b = min(B, n - n_used)
        if without:
            draws = rng.integers(np.arange(n_used, n_used + b), n)
            kern.fisher_yates_prefix(perm, n_used, n_used + b, draws)
            batch = rows[perm[n_used:n_used + b]]
        else:
            batch = rows[rng.integers(0, n, size=b)]
        y_batch = targets[batch]
        if n_used == 0 and kind == MSE:
            bank.shift = float(y_batch.mean())
        live = np.unique(arm_slot[active])
        try:
            bank.insert(X, batch, live, columns[live], y_batch, ledger, kern)
        except BudgetExhausted as exc:
            exc.insertions_used = inserted
            raise
        inserted += b * live.size
        n_used += b

        idx = np.flatnonzero(active)
        pos_of = np.full(len(slots), -1, dtype=np.int64)
        pos_of[live] = np.arange(live.size)
        left, right = _side_arrays(bank, live, pos_of[arm_slot[idx]], arm_thr[idx], n_used)
        mu, var = objective_variance(kind, left, right)
        half = z * np.sqrt(var / n_used)
        if without:
            half = half * finite_population_factor(n_used, n)
        mu_hat[idx] = mu
        ci[idx] = half
        if config.instrument:
            np.maximum.at(ci_scale, idx, half * math.sqrt(n_used / log_inv_delta))

        min_ucb = np.min(mu + half)
        dropped = idx[(mu - half) > min_ucb]
        active[dropped] = False
        deactivated_at[dropped] = n_used
        history.append(int(active.sum()))
        if history[-1] <= 1 or n_used >= n:
            break

    survivors = np.flatnonzero(active)
    deactivated_at[survivors] = n_used
    fell_back = False
    exact = without and n_used >= n
    fallback_pulls = 0
    samples = n_used

    if survivors.size > 1:
        fell_back = True
        if not without:
            live = np.unique(arm_slot[survivors])
            exact_bank = HistogramBank([edges[slots[s]] for s in live], bank.n_classes,
                                       float(targets[rows].mean()) if kind == MSE else 0.0)
            try:
                exact_bank.insert(X, rows, np.arange(live.size), columns[live], targets[rows], ledger, kern)
            except BudgetExhausted as exc:
                exc.insertions_used = inserted
                raise
            inserted += n * live.size
            pos_of = np.full(len(slots), -1, dtype=np.int64)
            pos_of[live] = np.arange(live.size)
            left, right = _side_arrays(exact_bank, None, pos_of[arm_slot[survivors]], arm_thr[survivors], n)
            mu_hat[survivors], _ = objective_variance(kind, left, right)
            ci[survivors] = 0.0
            fallback_pulls = n * survivors.size
            samples += n
            exact = True
        a = survivors[_tied_argmin(mu_hat[survivors])]
    else:
        a = survivors[0]

    arm = Arm(int(columns[arm_slot[a]]), int(arm_thr[a]))
    thr = float(edges[slots[arm_slot[a]]].edges[arm_thr[a]])
    mu = float(mu_hat[a])
    half = 0.0 if exact else float(ci[a])
    record = None
    if config.instrument:
        all_arms = [Arm(int(columns[arm_slot[i]]), int(arm_thr[i])) for i in range(A)]
        record = PullRecord(all_arms, deactivated_at.copy(), fallback_pulls, ci_scale, delta, B, n)
    res = SplitResult(arm, thr, mu, mu - parent, parent, samples, inserted,
                      candidate=arm, candidate_threshold=thr, fell_back_to_exact=fell_back,
                      exact=exact, ci_half_width=half, arms_surviving_history=history,
                      pull_record=record)
    # an estimate-only winner is gated on its optimistic bound
    gate = None if exact else (mu - half) - parent
    return _finish(res, config.min_impurity_decrease, gate)


def record_pull_counts(result: SplitResult) -> dict[Arm, int]:
    """Samples each arm consumed before leaving the candidate set."""
    rec = result.pull_record
    if rec is None:
        raise ValueError("result was produced without instrumentation")
    return {arm: int(p) for arm, p in zip(rec.arms, rec.pulls)}


SOLVERS = ("exact", "mabsplit", "naive")


def solve(solver: str, node: NodeView, kind: str, edges, config: SolverConfig, ledger: InsertionLedger) -> SplitResult:
    if solver == "exact":
        return solve_exact(node, kind, edges, ledger, config.min_impurity_decrease)
    if solver == "naive":
        return solve_naive(node, kind, edges, ledger, config.min_impurity_decrease)
    if solver == "mabsplit":
        return solve_mabsplit(node, kind, edges, config, ledger)
    raise ValueError(f"unknown solver {solver!r}")
