"""Compare the compiled and numpy kernel backends.

    python -m banditforest.bench [--rows 200000] [--features 20] [--repeat 5]

Times histogram insertion (binning plus accumulation) for classification
and regression cells, checks that both backends produce identical cells,
and times one full bandit root split on each backend.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from ._core import compiled_available, get_kernels
from .data import SyntheticSpec, make_synthetic
from .histogram import EQUAL_WIDTH, RANDOM_UNIFORM, HistogramBank, InsertionLedger, make_edges
from .splitter import SolverConfig, node_edges, solve_mabsplit


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _bank(X, n_classes, strategy, T, rng):
    edges = [make_edges(strategy, float(X[:, j].min()), float(X[:, j].max()), T, rng) for j in range(X.shape[1])]
    return HistogramBank(edges, n_classes)


def insertion_benchmark(rows: int, features: int, T: int, repeat: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    X = np.asfortranarray(rng.standard_normal((rows, features)))
    y_cls = rng.integers(0, 2, size=rows)
    y_reg = rng.standard_normal(rows)
    idx = np.arange(rows, dtype=np.int64)
    slots = np.arange(features, dtype=np.int64)
    backends = ["python"] + (["compiled"] if compiled_available() else [])
    out = []
    for strategy in (EQUAL_WIDTH, RANDOM_UNIFORM):
        for label, K, y in (("classification", 2, y_cls), ("regression", 0, y_reg)):
            cells = {}
            row = {"strategy": strategy, "task": label, "insertions": rows * features}
            for name in backends:
                k = get_kernels(name)
                template = _bank(X, K, strategy, T, np.random.default_rng(seed))

                def run():
                    bank = HistogramBank(template.edges, K)
                    bank.insert(X, idx, slots, slots, y, InsertionLedger(), k)
                    cells[name] = bank.cells

                sec = _best_of(run, repeat)
                row[f"{name}_s"] = sec
                row[f"{name}_M_insertions_per_s"] = rows * features / sec / 1e6
            if len(cells) == 2:
                row["identical"] = bool(np.array_equal(cells["python"], cells["compiled"]))
                row["speedup"] = row["python_s"] / row["compiled_s"]
            out.append(row)
    return out


def split_benchmark(rows: int, features: int, repeat: int, seed: int = 0) -> dict:
    d = make_synthetic(SyntheticSpec("classification", rows, features, 2, seed=seed))
    view = d.full_view()
    edges = node_edges(view)
    row = {"rows": rows, "features": features}
    results = {}
    for name in ["python"] + (["compiled"] if compiled_available() else []):
        k = get_kernels(name)

        def run():
            results[name] = solve_mabsplit(view, "gini", edges, SolverConfig(seed=seed), None, k)

        row[f"{name}_s"] = _best_of(run, repeat)
    if len(results) == 2:
        a, b = results["python"], results["compiled"]
        row["identical"] = a.candidate == b.candidate and a.mu == b.mu and a.insertions_used == b.insertions_used
        row["speedup"] = row["python_s"] / row["compiled_s"]
    return row


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m banditforest.bench", description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=200_000)
    p.add_argument("--features", type=int, default=20)
    p.add_argument("--bins", type=int, default=32)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = p.parse_args(argv)
    ins = insertion_benchmark(args.rows, args.features, args.bins, args.repeat)
    split = split_benchmark(min(args.rows, 50_000), args.features, max(1, args.repeat // 2))
    if args.json:
        print(json.dumps({"insertion": ins, "split": split}, indent=2))
        return 0
    if not compiled_available():
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"{'strategy':<15}{'task':<16}{'python s':>10}{'compiled s':>12}{'speedup':>9}  identical")
    for r in ins:
        print(f"{r['strategy']:<15}{r['task']:<16}{r['python_s']:>10.4f}"
              f"{r.get('compiled_s', float('nan')):>12.4f}{r.get('speedup', float('nan')):>9.1f}  {r.get('identical', '-')}")
    print(f"bandit root split, {split['rows']} x {split['features']}: python {split['python_s']:.4f}s", end="")
    if "compiled_s" in split:
        print(f", compiled {split['compiled_s']:.4f}s ({split['speedup']:.1f}x), identical={split['identical']}")
    else:
        print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
