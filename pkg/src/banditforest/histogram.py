"""Per-feature binned sufficient statistics and the insertion ledger.

A value ``v`` lands in bin ``j`` iff ``edges[j-1] <= v < edges[j]``, so the
left side of threshold ``j`` is bins ``0..j`` (points with ``v < edges[j]``).
Classification cells hold per-class counts; regression cells hold
``(count, sum y, sum y^2, sum y^3, sum y^4)``.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass

import numpy as np

from . import _core
from .impurity import SideStats

EQUAL_WIDTH = "equal_width"
RANDOM_UNIFORM = "random_uniform"
STRATEGIES = (EQUAL_WIDTH, RANDOM_UNIFORM)

N_MOMENTS = 5


class BudgetExhausted(RuntimeError):
    """An insertion would push the ledger past its cap."""


class InsertionLedger:
    """Monotone, thread-safe count of histogram insertions with an optional cap.

    ``charge`` is an atomic test-and-add: it either records all ``k``
    insertions within the cap or raises without touching the count.
    """

    def __init__(self, cap: int | None = None):
        if cap is not None and cap < 0:
            raise ValueError("cap must be non-negative")
        self.cap = cap
        self._total = 0
        self._lock = threading.Lock()

    @property
    def total_insertions(self) -> int:
        return self._total

    @property
    def remaining(self) -> float:
        return math.inf if self.cap is None else self.cap - self._total

    def charge(self, k: int = 1) -> None:
        if k < 0:
            raise ValueError("cannot charge a negative count")
        with self._lock:
            if self.cap is not None and self._total + k > self.cap:
                raise BudgetExhausted(f"charging {k} exceeds cap {self.cap} (used {self._total})")
            self._total += k

    def __repr__(self):
        return f"InsertionLedger(total={self._total}, cap={self.cap})"


@dataclass(frozen=True, eq=False)
class BinEdges:
    strategy: str
    edges: np.ndarray
    feature_min: float
    feature_max: float

    @property
    def T(self) -> int:
        return int(self.edges.size)

    @property
    def degenerate(self) -> bool:
        return self.edges.size == 0

    @property
    def width(self) -> float:
        return (self.feature_max - self.feature_min) / (self.T + 1) if self.T else 0.0

    def bin_index(self, value: float) -> int:
        T = self.T
        if T == 0:
            return 0
        e = self.edges
        if self.strategy == EQUAL_WIDTH:
            w = self.width
            q = math.floor((value - self.feature_min) / w) if w > 0 else 0
            idx = min(max(q, 0), T)
            while idx < T and value >= e[idx]:
                idx += 1
            while idx > 0 and value < e[idx - 1]:
                idx -= 1
            return int(idx)
        return bisect.bisect_right(e, value)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "edges": [float(v) for v in self.edges],
            "feature_min": self.feature_min,
            "feature_max": self.feature_max,
        }


def make_edges(strategy: str, feature_min: float, feature_max: float, T: int, seed=0) -> BinEdges:
    """Interior thresholds over ``[feature_min, feature_max]``.

    A constant feature yields degenerate (empty) edges, which the splitter
    skips.  Random draws that collide are redrawn up to 100 times and then
    deduplicated, so ``T`` may shrink.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown edge strategy {strategy!r}")
    if T < 1:
        raise ValueError("T must be at least 1")
    lo, hi = float(feature_min), float(feature_max)
    if not lo <= hi:
        raise ValueError("feature_min must not exceed feature_max")
    if lo == hi:
        return BinEdges(strategy, np.empty(0), lo, hi)
    if strategy == EQUAL_WIDTH:
        width = (hi - lo) / (T + 1)
        edges = lo + width * np.arange(1, T + 1)
        edges = np.unique(edges[(edges > lo) & (edges < hi)])
        return BinEdges(strategy, edges, lo, hi)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    edges = np.sort(rng.uniform(lo, hi, size=T))
    for _ in range(100):
        bad = np.concatenate([[edges[0] <= lo], np.diff(edges) == 0])
        if not bad.any():
            break
        edges[bad] = rng.uniform(lo, hi, size=int(bad.sum()))
        edges.sort()
    edges = np.unique(edges[edges > lo])
    return BinEdges(strategy, edges, lo, hi)


class FeatureHistogram:
    """Histogram of one feature with ``T + 1`` cells.

    For regression, targets are shifted by ``shift`` before accumulation; the
    split objective is invariant to the shift and it keeps the higher moments
    well conditioned.
    """

    def __init__(self, edges: BinEdges, n_classes: int = 0, shift: float = 0.0, cells: np.ndarray | None = None):
        self.edges = edges
        self.n_classes = n_classes
        self.shift = shift
        if cells is None:
            shape = (edges.T + 1, n_classes) if n_classes else (edges.T + 1, N_MOMENTS)
            cells = np.zeros(shape, dtype=np.int64 if n_classes else np.float64)
        self.cells = cells

    @property
    def classification(self) -> bool:
        return self.n_classes > 0

    @property
    def count(self) -> int:
        if self.classification:
            return int(self.cells.sum())
        return int(round(self.cells[:, 0].sum()))

    def insert(self, value: float, target, ledger: InsertionLedger) -> int:
        """Add one point; returns its bin.  Charges the ledger first."""
        ledger.charge(1)
        j = self.edges.bin_index(value)
        if self.classification:
            self.cells[j, int(target)] += 1
        else:
            v = float(target) - self.shift
            v2 = v * v
            self.cells[j] += (1.0, v, v2, v2 * v, v2 * v2)
        return j

    def insert_many(self, values, targets, ledger: InsertionLedger) -> None:
        values = np.ascontiguousarray(values, dtype=np.float64)
        bank = HistogramBank([self.edges], self.n_classes, self.shift, cells=self.cells[None])
        X = np.asfortranarray(values[:, None])
        bank.insert(X, np.arange(values.size), np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64), targets, ledger)

    def prefix_scan(self) -> list[tuple[SideStats, SideStats]]:
        return prefix_scan(self)


def prefix_scan(h: FeatureHistogram) -> list[tuple[SideStats, SideStats]]:
    """Left/right statistics at each of the ``T`` thresholds, in one pass."""
    total = h.count
    if total == 0:
        raise ValueError("empty histogram")
    left, right = scan_cells(h.cells[None])
    left, right = left[0] / total, right[0] / total
    cls = h.classification
    return [(SideStats(left[j], total, cls), SideStats(right[j], total, cls)) for j in range(h.edges.T)]


def scan_cells(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative left sums and complementary right sums over the bin axis.

    ``cells`` is ``(m, B, C)``; returns two ``(m, B - 1, C)`` arrays.
    """
    cum = np.cumsum(cells, axis=1)
    left = cum[:, :-1]
    right = cum[:, -1:] - left
    return left, right


class HistogramBank:
    """Histograms for several features stacked into one array.

    Cells are ``(m, T_max + 1, C)``; features with fewer thresholds leave
    their trailing bins empty.  This is the layout the splitter inserts into.
    """

    def __init__(self, edges: list[BinEdges], n_classes: int = 0, shift: float = 0.0, cells: np.ndarray | None = None):
        self.edges = edges
        self.n_classes = n_classes
        self.shift = shift
        m = len(edges)
        self.n_edges = np.array([e.T for e in edges], dtype=np.int64)
        self.t_max = int(self.n_edges.max()) if m else 0
        self.padded = np.full((m, max(self.t_max, 1)), np.inf)
        for i, e in enumerate(edges):
            self.padded[i, : e.T] = e.edges
        self.lo = np.array([e.feature_min for e in edges], dtype=np.float64)
        self.width = np.array([e.width for e in edges], dtype=np.float64)
        self.equal_width = np.array([e.strategy == EQUAL_WIDTH for e in edges], dtype=np.uint8)
        if cells is None:
            C = n_classes if n_classes else N_MOMENTS
            cells = np.zeros((m, self.t_max + 1, C), dtype=np.int64 if n_classes else np.float64)
        self.cells = cells

    def __getitem__(self, slot: int) -> FeatureHistogram:
        e = self.edges[slot]
        return FeatureHistogram(e, self.n_classes, self.shift, cells=self.cells[slot, : e.T + 1])

    def insert(self, X, rows, slots, columns, targets, ledger: InsertionLedger, kernels=None) -> None:
        """Insert ``rows`` of ``X`` into the histograms at ``slots``.

        ``columns`` gives the matrix column of each slot and ``targets`` the
        targets of ``rows``.  Charges ``len(rows) * len(slots)`` insertions
        before touching any cell.
        """
        k = kernels or _core.kernels
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        slots = np.ascontiguousarray(slots, dtype=np.int64)
        b, m = rows.size, slots.size
        if b == 0 or m == 0:
            return
        ledger.charge(b * m)
        bins = np.empty((m, b), dtype=np.int64)
        k.bin_batch(
            X,
            rows,
            np.ascontiguousarray(columns, dtype=np.int64),
            self.lo[slots],
            self.width[slots],
            np.ascontiguousarray(self.padded[slots]),
            self.n_edges[slots],
            self.equal_width[slots],
            bins,
        )
        if self.n_classes:
            k.add_class_counts(bins, np.ascontiguousarray(targets, dtype=np.int64), slots, self.cells)
        else:
            y = np.ascontiguousarray(targets, dtype=np.float64) - self.shift
            k.add_moments(bins, y, slots, self.cells)

    def scan(self, slots=None) -> tuple[np.ndarray, np.ndarray]:
        cells = self.cells if slots is None else self.cells[slots]
        return scan_cells(cells)
