import numpy as np
import pytest
from distreject.tree import LEAF, RegressionTree

def fit(X, y, **kwargs):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return RegressionTree(**kwargs).fit(X, y, np.arange(len(y)), np.random.default_rng(0))

def test_first_split_separates_the_step():
    tree = fit([[0.0], [1.0], [2.0], [3.0]], [0.0, 0.0, 1.0, 1.0], min_node_size=2)
    assert tree.feature[0] == 0
    assert tree.threshold[0] == 1.5
    assert tree.leaf_count == 2
    leaves = tree.apply(np.array([[0.5], [2.5]]))
    assert tree.leaf_members(leaves[0]).tolist() == [0, 1]
    assert tree.leaf_members(leaves[1]).tolist() == [2, 3]

def test_gain_ties_go_to_first_feature():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    tree = fit(np.column_stack([x, x]), [0.0, 0.0, 1.0, 1.0], min_node_size=2)
    assert tree.feature[0] == 0

def test_grown_to_single_rows():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(40, 3))
    y = rng.normal(size=40)
    tree = fit(X, y)
    members = [m for m in tree.members if m is not None]
    assert sorted(np.concatenate(members).tolist()) == list(range(40))
    assert all(m.size == 1 for m in members)
    # Every training row routes to its own leaf
    leaves = tree.apply(X)
    for i, leaf in enumerate(leaves):
        assert tree.leaf_members(leaf).tolist() == [i]

def test_constant_feature_gives_single_leaf():
    tree = fit(np.ones((10, 1)), np.arange(10.0))
    assert tree.node_count == 1
    assert tree.feature[0] == LEAF
    assert tree.leaf_members(0).tolist() == list(range(10))

def test_constant_target_is_not_split():
    tree = fit(np.arange(10.0).reshape(-1, 1), np.full(10, 2.0))
    assert tree.leaf_count == 1

def test_min_node_size_stops_splitting():
    X = np.arange(20.0).reshape(-1, 1)
    tree = fit(X, np.sin(X[:, 0]), min_node_size=5)
    for m in tree.members:
        if m is not None:
            assert m.size >= 1
    # Internal nodes held more than five rows
    assert tree.leaf_count < 20

def test_only_given_rows_are_used():
    X = np.arange(10.0).reshape(-1, 1)
    rows = np.array([1, 4, 7])
    tree = RegressionTree().fit(X, X[:, 0], rows, np.random.default_rng(0))
    members = np.concatenate([m for m in tree.members if m is not None])
    assert sorted(members.tolist()) == [1, 4, 7]
