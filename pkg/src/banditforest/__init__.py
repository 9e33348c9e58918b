"""Tree ensembles whose node splits are found by adaptive, bandit-style sampling."""

__version__ = "0.1.0"

from ._core import BACKEND
from .data import (
    Dataset,
    NodeView,
    SyntheticSpec,
    bootstrap_sample,
    feature_subspace,
    load_csv,
    make_synthetic,
    make_synthetic_with_truth,
    patch_subsample,
    train_test_split,
    write_csv,
)
from .forest import Forest, ForestConfig, fit_forest, fit_forest_with_budget, oob_indices, predict_forest
from .histogram import BinEdges, BudgetExhausted, FeatureHistogram, InsertionLedger, make_edges
from .splitter import Arm, SolverConfig, SplitResult, solve_exact, solve_mabsplit, solve_naive
from .tree import DecisionTree, TreeConfig, fit_tree

__all__ = [
    "BACKEND",
    "Arm",
    "BinEdges",
    "BudgetExhausted",
    "Dataset",
    "DecisionTree",
    "FeatureHistogram",
    "Forest",
    "ForestConfig",
    "InsertionLedger",
    "NodeView",
    "SolverConfig",
    "SplitResult",
    "SyntheticSpec",
    "TreeConfig",
    "bootstrap_sample",
    "feature_subspace",
    "fit_forest",
    "fit_forest_with_budget",
    "fit_tree",
    "load_csv",
    "make_edges",
    "make_synthetic",
    "make_synthetic_with_truth",
    "oob_indices",
    "patch_subsample",
    "predict_forest",
    "solve_exact",
    "solve_mabsplit",
    "solve_naive",
    "train_test_split",
    "write_csv",
]
