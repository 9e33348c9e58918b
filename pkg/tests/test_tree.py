import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from banditforest.data import CLASSIFICATION, REGRESSION, Dataset, NodeView, SyntheticSpec, make_synthetic
from banditforest.histogram import InsertionLedger
from banditforest.impurity import ENTROPY, GINI, MSE
from banditforest.tree import DecisionTree, TreeConfig, fit_tree


def stump_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 3))
    X[:2, 0] = [-1.0, 1.0]
    y = (X[:, 0] >= 0).astype(int)
    return Dataset(X, y, CLASSIFICATION)


def test_depth_zero_is_a_leaf():
    d = make_synthetic(SyntheticSpec(n_samples=100, n_features=3, seed=1))
    t = fit_tree(d.full_view(), TreeConfig(max_depth=0))
    assert t.root.is_leaf and t.insertions_used == 0
    assert_allclose(t.root.prediction, np.bincount(d.targets) / 100)
    r = make_synthetic(SyntheticSpec(REGRESSION, 100, 3, seed=1))
    tr = fit_tree(r.full_view(), TreeConfig(max_depth=0, impurity=MSE))
    assert tr.predict(r.features[0]) == pytest.approx(r.targets.mean())


def test_pure_node_is_a_leaf():
    d = Dataset(np.random.default_rng(0).normal(size=(50, 2)), np.zeros(50, int), CLASSIFICATION, n_classes=2)
    t = fit_tree(d.full_view(), TreeConfig(max_depth=5, min_impurity_decrease=0))
    assert t.root.is_leaf and t.insertions_used == 0
    assert_array_equal(t.predict([0.0, 0.0]), [1.0, 0.0])


def test_separable_stump():
    d = stump_data()
    t = fit_tree(d.full_view(), TreeConfig(max_depth=1, feature_subsample="all", bins_T=1))
    assert t.depth == 1 and t.root.feature_index == 0
    assert np.mean(np.argmax(t.predict_values(d.features), axis=1) == d.targets) == 1.0
    assert_array_equal(t.predict([-0.5, 0, 0]), [1.0, 0.0])
    assert_array_equal(t.predict([0.5, 0, 0]), [0.0, 1.0])


def test_regression_leaf_mean():
    d = Dataset(np.zeros((2, 1)), np.array([2.0, 4.0]), REGRESSION)
    t = fit_tree(d.full_view(), TreeConfig(max_depth=3, impurity=MSE))
    assert t.predict([7.0]) == 3.0


def test_predict_shape_check():
    t = fit_tree(stump_data().full_view(), TreeConfig(max_depth=1))
    with pytest.raises(ValueError):
        t.predict([0.0, 1.0])


def _leaf_counts_match(tree, d, rows):
    leaves = tree.apply(d.features[rows])
    nodes = list(tree.nodes())
    for idx, count in zip(*np.unique(leaves, return_counts=True)):
        assert nodes[idx].is_leaf
        assert nodes[idx].n_samples == count
    assert sum(n.n_samples for n in nodes if n.is_leaf) == rows.size


@pytest.mark.parametrize("solver", ["mabsplit", "exact"])
def test_routing_consistency(solver):
    d = make_synthetic(SyntheticSpec(n_samples=600, n_features=6, n_informative=3, seed=2))
    rows = np.random.default_rng(0).integers(0, 600, 600)
    t = fit_tree(NodeView(d, rows), TreeConfig(max_depth=4, solver=solver, feature_subsample="all"))
    assert t.nodes_split > 0
    _leaf_counts_match(t, d, rows)


@pytest.mark.parametrize("kind", [GINI, ENTROPY, MSE])
def test_exact_and_naive_grow_identical_trees(kind):
    task = REGRESSION if kind == MSE else CLASSIFICATION
    d = make_synthetic(SyntheticSpec(task, 300, 4, 2, seed=5))
    cfg = dict(max_depth=3, impurity=kind, feature_subsample="all", bins_T=6, seed=3)
    a = fit_tree(d.full_view(), TreeConfig(solver="exact", **cfg))
    b = fit_tree(d.full_view(), TreeConfig(solver="naive", **cfg))
    pairs = list(zip(a.nodes(), b.nodes()))
    assert len(pairs) == len(list(a.nodes())) == len(list(b.nodes()))
    for x, y in pairs:
        assert (x.n_samples, x.feature_index, x.threshold_value) == (y.n_samples, y.feature_index, y.threshold_value)
        assert x.impurity_decrease == pytest.approx(y.impurity_decrease, rel=1e-9, abs=1e-12)


def test_limits_respected():
    d = make_synthetic(SyntheticSpec(n_samples=2000, n_features=8, n_informative=4, seed=3))
    t = fit_tree(d.full_view(), TreeConfig(max_depth=3, min_impurity_decrease=0))
    assert t.depth <= 3
    t = fit_tree(d.full_view(), TreeConfig(max_leaf_nodes=5, min_impurity_decrease=0, feature_subsample="all"))
    assert t.n_leaves == 5


def test_insertions_sum_over_nodes():
    d = make_synthetic(SyntheticSpec(n_samples=1500, n_features=5, n_informative=3, seed=4))
    led = InsertionLedger()
    t = fit_tree(d.full_view(), TreeConfig(max_depth=4, solver="exact", feature_subsample="all"), led)
    assert t.insertions_used == led.total_insertions
    # exact charges n times the node's feature count at every evaluated node
    assert t.insertions_used >= 1500 * 5


def test_budget_interrupts_tree():
    d = make_synthetic(SyntheticSpec(n_samples=1000, n_features=5, n_informative=3, seed=4))
    led = InsertionLedger(cap=10_000)
    t = fit_tree(d.full_view(), TreeConfig(max_depth=6, solver="exact", feature_subsample="all"), led)
    assert t.budget_exhausted
    assert t.insertions_used == led.total_insertions <= 10_000


def test_json_round_trip():
    d = make_synthetic(SyntheticSpec(n_samples=500, n_features=4, n_informative=2, seed=6))
    t = fit_tree(d.full_view(), TreeConfig(max_depth=3))
    back = DecisionTree.from_dict(json.loads(json.dumps(t.to_dict())))
    assert_array_equal(back.predict_values(d.features), t.predict_values(d.features))
    assert back.to_dict() == t.to_dict()


def test_deterministic():
    d = make_synthetic(SyntheticSpec(n_samples=800, n_features=9, n_informative=3, seed=7))
    cfg = TreeConfig(max_depth=4, seed=11)
    assert fit_tree(d.full_view(), cfg).to_dict() == fit_tree(d.full_view(), cfg).to_dict()


def test_config_validation():
    with pytest.raises(ValueError, match="stopping rule"):
        TreeConfig(min_impurity_decrease=0).validate()
    with pytest.raises(ValueError):
        TreeConfig(max_depth=-1).validate()
    with pytest.raises(ValueError):
        TreeConfig(max_depth=2, solver="bogus").validate()
    assert TreeConfig(bins_T="sqrt").resolve_bins(50) == 8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.integers(10, 200), st.integers(0, 4))
def test_probabilities_sum_to_one(seed, n, depth):
    d = make_synthetic(SyntheticSpec(n_samples=n, n_features=3, n_informative=2, seed=seed))
    t = fit_tree(d.full_view(), TreeConfig(max_depth=depth, seed=seed))
    p = t.predict_values(d.features)
    assert_allclose(p.sum(axis=1), 1.0)
    assert t.depth <= depth
