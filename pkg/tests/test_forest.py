import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from banditforest.data import CLASSIFICATION, REGRESSION, Dataset, SyntheticSpec, make_synthetic, train_test_split
from banditforest.forest import (
    EXTRA_TREES,
    RANDOM_PATCHES,
    RF,
    Forest,
    ForestConfig,
    fit_forest,
    fit_forest_with_budget,
    oob_indices,
    predict_forest,
)
from banditforest.impurity import MSE
from banditforest.tree import DecisionTree, TreeConfig, TreeNode

from test_tree import stump_data


def _leaf_tree(prob):
    return DecisionTree(TreeNode(1, np.asarray(prob, dtype=float), 0.0, 0), TreeConfig(max_depth=0), 1, 2)


def test_constant_model():
    d = make_synthetic(SyntheticSpec(n_samples=300, n_features=4, seed=1))
    f = fit_forest(d, ForestConfig(n_trees=1, tree=TreeConfig(max_depth=0)))
    # a depth-0 tree predicts its bootstrap distribution
    boot = np.bincount(d.targets[f.samples[0]], minlength=2) / 300
    assert_allclose(predict_forest(f, d.features[0]), boot)
    r = make_synthetic(SyntheticSpec(REGRESSION, 300, 4, seed=1))
    fr = fit_forest(r, ForestConfig(n_trees=1, tree=TreeConfig(max_depth=0, impurity=MSE)))
    assert predict_forest(fr, r.features[0]) == pytest.approx(r.targets[fr.samples[0]].mean())


@pytest.mark.parametrize("kind", [RF, EXTRA_TREES, RANDOM_PATCHES])
def test_stump_forest_accuracy(kind):
    d = stump_data(1000, seed=3)
    train, test = train_test_split(d, 0.2, seed=0)
    tree = TreeConfig(max_depth=1, feature_subsample="all", bins_T=1)
    f = fit_forest(train, ForestConfig(kind, n_trees=5, tree=tree, alpha_f=1.0))
    acc = np.mean(f.predict(test.features) == test.targets)
    if kind == RF:
        assert acc == 1.0
    else:
        assert acc > 0.9


def test_random_patch_shape():
    d = make_synthetic(SyntheticSpec(n_samples=1000, n_features=20, seed=0))
    f = fit_forest(d, ForestConfig(RANDOM_PATCHES, n_trees=4, tree=TreeConfig(max_depth=2)))
    assert f.patch_rows.size == 700 and f.patch_features.size == 17
    allowed = set(f.patch_features.tolist())
    for rows, t in zip(f.samples, f.trees):
        assert np.isin(rows, f.patch_rows).all()
        assert {n.feature_index for n in t.internal_nodes()} <= allowed
    with pytest.raises(ValueError):
        oob_indices(f, 0)


def test_zero_budget_fallback():
    d = make_synthetic(SyntheticSpec(n_samples=200, n_features=3, seed=2))
    f = fit_forest(d, ForestConfig(n_trees=10, budget=0, tree=TreeConfig(max_depth=3)))
    assert f.completed_trees == 0 and f.trees == []
    majority = np.argmax(np.bincount(d.targets))
    assert_array_equal(f.predict(d.features[:5]), majority)
    r = Dataset(np.arange(5.0)[:, None], np.array([1.0, 2.0, 3.0, 4.0, 6.0]), REGRESSION)
    fr = fit_forest(r, ForestConfig(n_trees=3, budget=0, tree=TreeConfig(max_depth=3, impurity=MSE)))
    assert predict_forest(fr, [0.0]) == pytest.approx(3.2)


def test_budget_replay_of_one_tree():
    d = make_synthetic(SyntheticSpec(n_samples=2000, n_features=9, n_informative=3, seed=4))
    tree = TreeConfig(max_depth=4)
    one = fit_forest(d, ForestConfig(n_trees=1, tree=tree, seed=7))
    cost = one.trees[0].insertions_used
    f = fit_forest_with_budget(d, ForestConfig(n_trees=5, tree=tree, seed=7, budget=cost))
    assert f.completed_trees == 1
    assert f.insertions_used <= cost
    assert f.trees[0].to_dict() == one.trees[0].to_dict()


def test_budget_never_exceeded():
    d = make_synthetic(SyntheticSpec(n_samples=3000, n_features=10, n_informative=3, seed=5))
    for solver in ("exact", "mabsplit"):
        for budget in (1, 5000, 77_777, 250_000):
            f = fit_forest(d, ForestConfig(n_trees=20, budget=budget, tree=TreeConfig(max_depth=4, solver=solver)))
            assert f.insertions_used <= budget
            assert len(f.trees) >= f.completed_trees


def test_soft_vote_tie_goes_to_label_zero():
    f = Forest([_leaf_tree([1, 0]), _leaf_tree([0, 1])], [np.zeros(1, int)] * 2, ForestConfig(), 1, 1, 2,
               np.array([0.5, 0.5]), 2, 0)
    assert_allclose(f.predict_row([0.0]), [0.5, 0.5])
    assert f.predict([[0.0]])[0] == 0


def test_identical_trees_idempotent():
    t = _leaf_tree([0.3, 0.7])
    f = Forest([t, t, t], [np.zeros(1, int)] * 3, ForestConfig(), 1, 1, 2, np.array([0.5, 0.5]), 3, 0)
    assert_allclose(f.predict_row([1.0]), t.predict([1.0]))


def test_oob_size_and_disjoint():
    d = make_synthetic(SyntheticSpec(n_samples=1000, n_features=3, seed=6))
    f = fit_forest(d, ForestConfig(n_trees=30, tree=TreeConfig(max_depth=0)))
    sizes = []
    for i in range(30):
        oob = oob_indices(f, i)
        assert np.intersect1d(oob, f.samples[i]).size == 0
        assert np.union1d(oob, f.samples[i]).size == 1000
        sizes.append(oob.size)
    assert abs(np.mean(sizes) - 368) < 40
    one = Dataset(np.zeros((1, 1)), np.array([0]), CLASSIFICATION)
    f1 = fit_forest(one, ForestConfig(n_trees=1, tree=TreeConfig(max_depth=0)))
    assert oob_indices(f1, 0).size == 0


def test_forest_deterministic():
    d = make_synthetic(SyntheticSpec(n_samples=1000, n_features=8, n_informative=3, seed=8))
    cfg = ForestConfig(n_trees=4, tree=TreeConfig(max_depth=3), seed=3)
    a, b = fit_forest(d, cfg), fit_forest(d, cfg)
    assert [t.to_dict() for t in a.trees] == [t.to_dict() for t in b.trees]
    c = fit_forest(d, ForestConfig(n_trees=4, tree=TreeConfig(max_depth=3), seed=3, n_jobs=3))
    assert [t.to_dict() for t in a.trees] == [t.to_dict() for t in c.trees]


def test_probabilities_sum_to_one():
    d = make_synthetic(SyntheticSpec(n_samples=800, n_features=6, n_informative=3, seed=9))
    for kind in (RF, EXTRA_TREES, RANDOM_PATCHES):
        f = fit_forest(d, ForestConfig(kind, n_trees=3, tree=TreeConfig(max_depth=3)))
        assert_allclose(f.predict_values(d.features).sum(axis=1), 1.0)


def test_extra_trees_overrides():
    d = make_synthetic(SyntheticSpec(n_samples=500, n_features=16, n_informative=3, seed=1))
    f = fit_forest(d, ForestConfig(EXTRA_TREES, n_trees=1, tree=TreeConfig(max_depth=2)))
    cfg = f.trees[0].config
    assert cfg.edge_strategy == "random_uniform" and cfg.bins_T == "sqrt"


def test_task_mismatch_and_validation():
    d = make_synthetic(SyntheticSpec(n_samples=50, n_features=3))
    with pytest.raises(ValueError):
        fit_forest(d, ForestConfig(n_trees=1, tree=TreeConfig(max_depth=1, impurity=MSE)))
    with pytest.raises(ValueError):
        fit_forest(d, ForestConfig(n_trees=0, tree=TreeConfig(max_depth=1)))
    with pytest.raises(ValueError):
        fit_forest(d, ForestConfig(kind="boosted", tree=TreeConfig(max_depth=1)))
    with pytest.raises(ValueError):
        fit_forest(d, ForestConfig(budget=-1, tree=TreeConfig(max_depth=1)))


def test_config_round_trip():
    cfg = ForestConfig(EXTRA_TREES, 7, TreeConfig(max_depth=3, solver="exact"), 1000, 5)
    assert ForestConfig.from_dict(cfg.to_dict()) == cfg
