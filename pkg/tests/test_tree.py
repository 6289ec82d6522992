import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cctree.tree import DecisionTree, Leaf, Split, best_split, fit_tree, impurity

import oracles


def _structure(node):
    if isinstance(node, Leaf):
        return ("leaf", node.prediction)
    return ("split", node.feature, node.threshold, _structure(node.left), _structure(node.right))


def test_perfect_single_split():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    assert best_split(X, y, None, "classification") == (0, 2.5, 0.5)
    tree = fit_tree(X, y, 1, "classification")
    np.testing.assert_array_equal(tree.predict(X), y)
    assert tree.depth() == 1


def test_gini_value():
    assert impurity([1, 1, 1, -1], "classification") == pytest.approx(0.375, abs=1e-12)
    assert impurity([1, 1], "classification") == 0.0
    assert impurity([1.0, 3.0], "regression") == pytest.approx(1.0)


def test_constant_features_make_a_leaf():
    X = np.ones((6, 2))
    y = np.array([1.0, -1, 1, -1, 1, 1])
    tree = fit_tree(X, y, 3, "classification")
    assert isinstance(tree.root, Leaf)
    assert tree.root.prediction == 1.0


def test_majority_tie_is_negative():
    tree = fit_tree(np.zeros((2, 1)), np.array([1.0, -1.0]), 2, "classification")
    assert tree.root.prediction == -1.0


def test_tie_break_prefers_lowest_feature():
    # both features separate perfectly
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    j, t, _ = best_split(X, y, None, "classification")
    assert (j, t) == (0, 0.5)
    assert best_split(X, y, [1], "classification")[0] == 1


def test_tie_break_prefers_lowest_threshold():
    # cuts after 1 and after 3 give the same gain
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0, -1.0])
    X2 = np.array([[0.0], [1.0], [2.0], [3.0]])
    y2 = np.array([1.0, -1.0, -1.0, 1.0])
    j, t, _ = best_split(X2, y2, None, "classification")
    assert t == 0.5
    assert oracles.oracle_split(X.tolist(), y.tolist(), "classification")[1] == \
        best_split(X, y, None, "classification")[1]


def test_depth_argument_validated():
    X, y = np.zeros((3, 1)), np.ones(3)
    for bad in (0, 5):
        with pytest.raises(ValueError):
            fit_tree(X, y, bad, "classification")


def test_deterministic_without_subsampling():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(80, 5))
    y = np.where(X[:, 0] + X[:, 2] > 0, 1.0, -1.0)
    a, b = fit_tree(X, y, 4, "classification"), fit_tree(X, y, 4, "classification")
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_subsampling_reproducible_per_seed():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 6))
    y = rng.normal(size=60)
    t1 = fit_tree(X, y, 3, "regression", 2, np.random.default_rng(7))
    t2 = fit_tree(X, y, 3, "regression", 2, np.random.default_rng(7))
    assert t1.to_dict() == t2.to_dict()
    with pytest.raises(ValueError):
        fit_tree(X, y, 3, "regression", 2, None)


def test_leaf_statistics():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(200, 3))
    y = np.where(X[:, 1] > 0.3, 1.0, -1.0)
    y[rng.random(200) < 0.1] *= -1
    tree = fit_tree(X, y, 3, "classification")
    leaf_ids = tree.apply(X)
    fracs = tree.leaf_positive_fraction(X)
    for k in np.unique(leaf_ids):
        rows = leaf_ids == k
        assert fracs[rows][0] == pytest.approx(np.mean(y[rows] > 0))
    assert sum(l.n_samples for l in tree.leaves()) == 200


def test_regression_leaf_is_mean():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    y = np.array([1.0, 3.0, 20.0, 22.0])
    tree = fit_tree(X, y, 1, "regression")
    np.testing.assert_allclose(tree.predict(X), [2.0, 2.0, 21.0, 21.0])


def test_path_consistency():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(300, 4))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    tree = fit_tree(X, y, 4, "classification")
    for x in X[:100]:
        path = tree.decision_path(x)
        assert len(path) <= 4
        assert all(r.holds(x) for r in path.rules)
        assert path.replay(x) == tree.predict(x)
    assert tree.decision_path(X[0]).render().endswith(f"=> predict {tree.predict(X[0]):g}")


def test_rule_rendering():
    tree = DecisionTree(Split(2, 0.5, Leaf(-1.0, 1, 0.0, 0.0), Leaf(1.0, 1, 0.0, 1.0)), 1,
                        "classification")
    assert tree.decision_path([0, 0, 0.2]).rules[0].render() == "feature[2] <= 0.5"
    assert tree.decision_path([0, 0, 0.9]).rules[0].render() == "feature[2] > 0.5"
    with pytest.raises(ValueError):
        tree.decision_path([0, 0, 0.9]).replay([0, 0, 0.1])


def test_serialization_round_trip():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 3))
    y = X[:, 0] ** 2 + rng.normal(scale=0.1, size=100)
    tree = fit_tree(X, y, 4, "regression")
    back = DecisionTree.from_dict(json.loads(json.dumps(tree.to_dict())))
    np.testing.assert_array_equal(back.predict(X), tree.predict(X))
    assert back.to_dict() == tree.to_dict()


_small = st.integers(1, 12).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(-3, 3).map(float), min_size=2, max_size=2), min_size=n, max_size=n),
    st.lists(st.sampled_from([-1.0, 1.0]), min_size=n, max_size=n),
))


@given(_small, st.integers(1, 4))
@settings(max_examples=150, deadline=None)
def test_matches_brute_force_oracle_classification(data, depth):
    X, y = data
    ref = oracles.oracle_fit(X, y, depth, "classification")
    tree = fit_tree(np.array(X), np.array(y), depth, "classification")
    assert _structure(tree.root) == ref
    assert tree.depth() <= depth


@given(st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(-3, 3).map(float), min_size=2, max_size=2), min_size=n, max_size=n),
    st.lists(st.integers(-5, 5).map(float), min_size=n, max_size=n))), st.integers(1, 3))
@settings(max_examples=100, deadline=None)
def test_matches_brute_force_oracle_regression(data, depth):
    X, y = data
    ref = oracles.oracle_fit(X, y, depth, "regression")
    tree = fit_tree(np.array(X), np.array(y), depth, "regression")
    for x in X:
        assert tree.predict(np.array(x)) == pytest.approx(oracles.oracle_predict(ref, x), abs=1e-9)


@given(st.integers(2, 60), st.integers(1, 4), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_depth_bound(n, depth, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = rng.choice([-1.0, 1.0], size=n)
    assert fit_tree(X, y, depth, "classification").depth() <= depth
