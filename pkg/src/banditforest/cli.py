"""Command-line experiment runner.

Every run is driven by one flat :class:`RunConfig`.  Values come from
command-line flags, then a ``--config`` file, then defaults.  The file is
either ``key = value`` lines or a result JSON whose ``config`` block is
reused.  Results are JSON documents that embed the effective config, so
``--config result.json`` replays a run.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .analysis import (
    IMPORTANCE_METHODS,
    MDI,
    mdi_importance,
    permutation_importance_oob,
    scaling_experiment,
    stability_report,
)
from .data import (
    CLASSIFICATION,
    REGRESSION,
    DataError,
    Dataset,
    NodeView,
    SyntheticSpec,
    load_csv,
    make_synthetic,
    train_test_split,
    write_csv,
)
from .forest import FOREST_KINDS, ForestConfig, error_rate, fit_forest
from .histogram import STRATEGIES
from .impurity import ENTROPY, GINI, MSE
from .splitter import SAMPLING, SOLVERS, SolverConfig
from .tree import TreeConfig

OUTPUT_DIR_ENV = "BANDITFOREST_OUTPUT_DIR"
COMMANDS = ("gen-data", "train", "budget", "importance", "scaling", "crossover")


@dataclass
class RunConfig:
    # data source: a CSV file, or the synthetic generator when empty
    data: str = ""
    label: str = "y"
    task: str = CLASSIFICATION
    n_samples: int = 2000
    n_features: int = 20
    n_informative: int = 4
    noise_scale: float = 1.0
    data_seed: int = 0
    test_fraction: float = 0.1
    # forest
    kind: str = "rf"
    trees: int = 5
    max_depth: int | None = 5
    max_leaf_nodes: int | None = None
    min_impurity_decrease: float = 0.005
    feature_subsample: str = "sqrt"
    edge_strategy: str = "equal_width"
    bins: str = "32"
    solver: str = "mabsplit"
    impurity: str = ""
    batch_size: int | None = None
    delta: float | None = None
    sampling: str = "without_replacement"
    alpha_n: float = 0.7
    alpha_f: float = 0.85
    budget: int | None = None
    # experiment
    seeds: list = field(default_factory=lambda: [0])
    method: str = MDI
    top_k: int | None = None
    runs: int = 5
    run_seeds: list | None = None
    sizes: list = field(default_factory=lambda: [1000, 3000, 10000])
    output: str = ""
    csv: str = ""

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def effective_impurity(self) -> str:
        if self.impurity:
            return self.impurity
        return GINI if self.task == CLASSIFICATION else MSE

    def validate(self, command: str) -> None:
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise DataError(f"unknown task {self.task!r}")
        if self.kind not in FOREST_KINDS:
            raise DataError(f"unknown forest kind {self.kind!r}")
        if self.solver not in SOLVERS:
            raise DataError(f"unknown solver {self.solver!r}")
        if self.sampling not in SAMPLING:
            raise DataError(f"unknown sampling mode {self.sampling!r}")
        if self.edge_strategy not in STRATEGIES:
            raise DataError(f"unknown edge strategy {self.edge_strategy!r}")
        if self.impurity and self.impurity not in (GINI, ENTROPY, MSE):
            raise DataError(f"unknown impurity {self.impurity!r}")
        if self.trees < 1 and not (command == "budget" and self.trees == 0):
            raise DataError("trees must be at least 1")
        if self.budget is not None and self.budget < 0:
            raise DataError("budget must be non-negative")
        if command == "budget" and self.budget is None:
            raise DataError("budget command needs --budget")
        if not self.seeds:
            raise DataError("need at least one seed")
        if command in ("scaling", "crossover") and len(self.sizes) < 3:
            raise DataError("need at least three sizes")
        if self.method not in IMPORTANCE_METHODS:
            raise DataError(f"unknown importance method {self.method!r}")
        if command == "importance" and self.runs < 2 and not self.run_seeds:
            raise DataError("importance needs at least two runs")

    def tree_config(self) -> TreeConfig:
        fs = self.feature_subsample
        fs = int(fs) if str(fs).isdigit() else fs
        bins = int(self.bins) if str(self.bins).isdigit() else self.bins
        return TreeConfig(
            max_depth=self.max_depth,
            max_leaf_nodes=self.max_leaf_nodes,
            min_impurity_decrease=self.min_impurity_decrease,
            feature_subsample=fs,
            edge_strategy=self.edge_strategy,
            bins_T=bins,
            solver=self.solver,
            impurity=self.effective_impurity(),
            batch_size=self.batch_size,
            delta=self.delta,
            sampling=self.sampling,
        )

    def forest_config(self, seed: int, budget=None) -> ForestConfig:
        return ForestConfig(self.kind, self.trees, self.tree_config(), budget, seed, self.alpha_n, self.alpha_f)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(self.task, self.n_samples, self.n_features, self.n_informative, self.noise_scale, self.data_seed)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _none_or(cast):
    def parse(text):
        if text is None or (isinstance(text, str) and text.strip().lower() in ("", "none", "null")):
            return None
        return cast(text)

    return parse


def _int_list(value):
    if isinstance(value, list):
        return [int(v) for v in value]
    parts = [p for p in str(value).replace(" ", "").split(",") if p]
    return [int(float(p)) for p in parts]


def _parse_bool_int(text):
    return int(float(text))


_PARSERS = {
    "int": int,
    "float": float,
    "str": str,
    "int | None": _none_or(_parse_bool_int),
    "float | None": _none_or(float),
    "list": _int_list,
    "list | None": _none_or(_int_list),
}


def coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise DataError(f"unknown config key {key!r}")
    parser = _PARSERS[str(_FIELD_TYPES[key])]
    if isinstance(value, str) and key not in ("data", "label", "output", "csv"):
        value = value.strip()
    try:
        return parser(value)
    except (TypeError, ValueError):
        raise DataError(f"bad value {value!r} for config key {key!r}") from None


def read_config_file(path) -> dict:
    """Key/value pairs from a ``key = value`` file or a result JSON."""
    if not os.path.isfile(path):
        raise DataError(f"missing config file: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"bad JSON config: {exc.msg}") from None
        doc = doc.get("config", doc)
        return {k: coerce(k, v) for k, v in doc.items()}
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno} is not 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = coerce(k, v)
    return out


def _seed_list(k):
    k = int(k)
    if k < 1:
        raise DataError("--seeds must be at least 1")
    return list(range(k))


# flag name -> config key; every flag defaults to None so that only
# explicitly set flags override the config file
_FLAG_SPECS = {
    "data": ("--data", str, "CSV file (synthetic data when omitted)"),
    "label": ("--label", str, "label column name or index"),
    "task": ("--task", str, "classification or regression"),
    "n_samples": ("--n-samples", int, "synthetic rows"),
    "n_features": ("--n-features", int, "synthetic columns"),
    "n_informative": ("--n-informative", int, "synthetic informative columns"),
    "noise_scale": ("--noise-scale", float, "synthetic noise scale"),
    "data_seed": ("--data-seed", int, "synthetic generator seed"),
    "test_fraction": ("--test-fraction", float, "held-out fraction"),
    "kind": ("--kind", str, "rf, extra_trees or random_patches"),
    "trees": ("--trees", int, "number of trees"),
    "max_depth": ("--max-depth", _none_or(int), "depth limit ('none' for unlimited)"),
    "max_leaf_nodes": ("--max-leaf-nodes", _none_or(int), "leaf limit"),
    "min_impurity_decrease": ("--min-impurity-decrease", float, "split gate"),
    "feature_subsample": ("--feature-subsample", str, "sqrt, all or a count"),
    "edge_strategy": ("--edge-strategy", str, "equal_width or random_uniform"),
    "bins": ("--bins", str, "thresholds per feature, or sqrt / m"),
    "solver": ("--solver", str, "exact, mabsplit or naive"),
    "impurity": ("--impurity", str, "gini, entropy or mse"),
    "batch_size": ("--batch-size", _none_or(int), "bandit batch size"),
    "delta": ("--delta", _none_or(float), "bandit error probability"),
    "sampling": ("--sampling", str, "with_replacement or without_replacement"),
    "alpha_n": ("--alpha-n", float, "random-patch row fraction"),
    "alpha_f": ("--alpha-f", float, "random-patch feature fraction"),
    "budget": ("--budget", _none_or(int), "insertion budget"),
    "seeds": ("--seeds", _seed_list, "run seeds 0..k-1"),
    "method": ("--method", str, "mdi or permutation_oob"),
    "top_k": ("--top-k", int, "features selected per run"),
    "runs": ("--runs", int, "forests per stability estimate"),
    "run_seeds": ("--run-seeds", _int_list, "explicit forest seeds for importance runs"),
    "sizes": ("--sizes", _int_list, "comma-separated subset sizes"),
    "output": ("--output", str, "output path"),
    "csv": ("--csv", str, "CSV series path (scaling, crossover)"),
}

_COMMAND_FLAGS = {
    "gen-data": ["task", "n_samples", "n_features", "n_informative", "noise_scale", "data_seed", "label", "output"],
}


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        raise DataError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgParser(prog="banditforest", description="Bandit-split tree ensembles: experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgParser)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="key = value file or result JSON")
        for key in _COMMAND_FLAGS.get(cmd, list(_FLAG_SPECS)):
            flag, typ, help_ = _FLAG_SPECS[key]
            p.add_argument(flag, dest=key, type=typ, default=None, help=help_)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = asdict(RunConfig())
    if args.config:
        values.update(read_config_file(args.config))
    for key in _FLAG_SPECS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return RunConfig(**values)


def load_dataset(cfg: RunConfig) -> Dataset:
    if cfg.data:
        return load_csv(cfg.data, cfg.label, cfg.task)
    return make_synthetic(cfg.synthetic_spec())


def _summary(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else None
    return {"values": [float(v) for v in arr], "mean": float(arr.mean()), "std": std}


def result_document(command: str, cfg: RunConfig, per_seed: list[dict], extra: dict | None = None) -> dict:
    metric_keys = [k for k in per_seed[0] if k != "seed"] if per_seed else []
    doc = {
        "version": __version__,
        "command": command,
        "config": asdict(cfg),
        "seeds": list(cfg.seeds),
        "per_seed": per_seed,
        "metrics": {k: _summary([r[k] for r in per_seed]) for k in metric_keys if _numeric(per_seed, k)},
    }
    if extra:
        doc.update(extra)
    return doc


def _numeric(rows, key):
    return all(isinstance(r[key], (int, float)) and not isinstance(r[key], bool) for r in rows)


def _metric_name(d: Dataset) -> str:
    return "test_accuracy" if d.is_classification else "test_mse"


def _train_runs(cfg: RunConfig, budget=None) -> list[dict]:
    d = load_dataset(cfg)
    rows = []
    for seed in cfg.seeds:
        train, test = train_test_split(d, cfg.test_fraction, seed)
        forest = fit_forest(train, cfg.forest_config(seed, budget))
        err = error_rate(forest, test.features, test.targets, d.is_classification)
        rows.append({
            "seed": seed,
            "train_time_ms": forest.wall_time_ms,
            "insertions_used": forest.insertions_used,
            "completed_trees": forest.completed_trees,
            "trees_voting": len(forest.trees),
            _metric_name(d): 1.0 - err if d.is_classification else err,
        })
    return rows


def cmd_train(cfg: RunConfig) -> dict:
    cfg.validate("train")
    return result_document("train", cfg, _train_runs(cfg, cfg.budget))


def cmd_budget(cfg: RunConfig) -> dict:
    cfg.validate("budget")
    return result_document("budget", cfg, _train_runs(cfg, cfg.budget), {"budget": cfg.budget})


def _run_seed_list(cfg: RunConfig, seed: int) -> list[int]:
    if cfg.run_seeds:
        return list(cfg.run_seeds)
    return [int(np.random.SeedSequence([seed, r]).generate_state(1)[0]) for r in range(cfg.runs)]


def cmd_importance(cfg: RunConfig) -> dict:
    cfg.validate("importance")
    d = load_dataset(cfg)
    k = cfg.top_k if cfg.top_k is not None else (cfg.n_informative if not cfg.data else 5)
    if not 0 < k < d.n_features:
        raise DataError(f"top-k must lie in (0, {d.n_features})")
    rows, reports = [], []
    for seed in cfg.seeds:
        selections, insertions, trees = [], [], []
        for run_seed in _run_seed_list(cfg, seed):
            forest = fit_forest(d, cfg.forest_config(run_seed, cfg.budget))
            if cfg.method == MDI:
                rep = mdi_importance(forest, k)
            else:
                rep = permutation_importance_oob(forest, d, run_seed, k)
            selections.append(rep.top_k)
            insertions.append(forest.insertions_used)
            trees.append(forest.completed_trees)
        stab = stability_report(selections, d.n_features, k)
        reports.append(json.loads(stab.to_json()))
        rows.append({
            "seed": seed,
            "stability": stab.stability,
            "mean_insertions_used": float(np.mean(insertions)),
            "mean_completed_trees": float(np.mean(trees)),
        })
    doc = result_document("importance", cfg, rows, {"k": k, "stability_reports": reports})
    return doc


def _write_series(path_csv, header, series):
    import csv

    with open(path_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in series:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_scaling(cfg: RunConfig) -> dict:
    cfg.validate("scaling")
    d = load_dataset(cfg)
    bins = cfg.tree_config().resolve_bins(d.n_features)
    solver_cfg = SolverConfig(cfg.batch_size, cfg.delta, cfg.sampling, cfg.min_impurity_decrease)
    rep = scaling_experiment(d, cfg.sizes, cfg.seeds, solver_cfg, cfg.effective_impurity(), cfg.solver, bins)
    if cfg.csv:
        rep.write_csv(cfg.csv)
    rows = [{"seed": s, "samples_by_size": [r[i] for r in rep.per_seed]} for i, s in enumerate(cfg.seeds)]
    doc = result_document("scaling", cfg, rows, {"scaling": rep.to_dict()})
    return doc


def cmd_crossover(cfg: RunConfig) -> dict:
    """Paired exact and bandit fits over the size grid."""
    cfg.validate("crossover")
    d = load_dataset(cfg)
    series = []
    for n in cfg.sizes:
        row = {"size": n}
        for solver in ("exact", "mabsplit"):
            ins, ms = [], []
            for seed in cfg.seeds:
                rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
                sub = d.subset(rng.integers(0, d.n_samples, size=n))
                alt = RunConfig(**{**asdict(cfg), "solver": solver})
                forest = fit_forest(sub, alt.forest_config(seed))
                ins.append(forest.insertions_used)
                ms.append(forest.wall_time_ms)
            row[f"{solver}_insertions"] = float(np.mean(ins))
            row[f"{solver}_wall_ms"] = float(np.mean(ms))
        series.append(row)
    crossover = None
    for i in range(len(series)):
        if all(r["mabsplit_insertions"] < r["exact_insertions"] for r in series[i:]):
            crossover = series[i]["size"]
            break
    if cfg.csv:
        keys = ["size", "exact_insertions", "mabsplit_insertions", "exact_wall_ms", "mabsplit_wall_ms"]
        _write_series(cfg.csv, keys, [[r[k] for k in keys] for r in series])
    return {
        "version": __version__,
        "command": "crossover",
        "config": asdict(cfg),
        "seeds": list(cfg.seeds),
        "series": series,
        "crossover_size": crossover,
    }


def cmd_gen_data(cfg: RunConfig) -> dict:
    if not cfg.output:
        raise DataError("gen-data needs --output")
    d = make_synthetic(cfg.synthetic_spec())
    if cfg.label != "y":
        d = Dataset(d.features, d.targets, d.task, d.n_classes, d.feature_names, d.class_labels, cfg.label)
    write_csv(d, cfg.output)
    return {"version": __version__, "command": "gen-data", "config": asdict(cfg), "rows": d.n_samples}


_HANDLERS = {
    "train": cmd_train,
    "budget": cmd_budget,
    "importance": cmd_importance,
    "scaling": cmd_scaling,
    "crossover": cmd_crossover,
}


def _emit(command: str, cfg: RunConfig, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False)
    path = cfg.output
    if not path and os.environ.get(OUTPUT_DIR_ENV):
        path = os.path.join(os.environ[OUTPUT_DIR_ENV], f"{command}.json")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if args.command == "gen-data":
            cmd_gen_data(cfg)
            return 0
        doc = _HANDLERS[args.command](cfg)
        _emit(args.command, cfg, doc)
    except (DataError, ValueError, OSError, KeyError) as exc:
        reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {reason}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
