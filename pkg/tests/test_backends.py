import numpy as np
import pytest
from distreject.backends import (
    DatasetError,
    DimensionError,
    LabeledDataset,
    NeighborCountError,
    forest_fit,
    forest_predict,
    knn_fit,
    knn_predict,
    rule_of_thumb_k,
    select_k,
    select_mtry,
)
from distreject.config import ForestParams
from distreject.scoring import entropy_discrete

@pytest.fixture
def line():
    return LabeledDataset(np.array([[0.0], [1.0], [2.0]]), np.array([10.0, 20.0, 30.0]))

@pytest.fixture
def noisy():
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(120, 3))
    return LabeledDataset(X, X[:, 0] + 0.1 * rng.normal(size=120))

def test_dataset_validation():
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(DatasetError):
        LabeledDataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(DatasetError):
        LabeledDataset(np.array([[np.nan]]), np.array([1.0]))
    data = LabeledDataset(np.arange(4.0), np.arange(4.0))
    assert (data.n, data.d) == (4, 1)
    assert data.subset([1, 3]).targets.tolist() == [1.0, 3.0]

def test_knn_two_nearest(line):
    d = knn_predict(knn_fit(line, 2), np.array([0.1]))
    assert d.points.tolist() == [10.0, 20.0]
    assert d.weights.tolist() == [0.5, 0.5]

def test_knn_all_neighbours(line):
    d = knn_predict(knn_fit(line, 3), np.array([5.0]))
    assert d.points.tolist() == [10.0, 20.0, 30.0]
    np.testing.assert_allclose(d.weights, [1 / 3] * 3)

def test_knn_single_neighbour_is_point_mass(line):
    d = knn_predict(knn_fit(line, 1), np.array([1.9]))
    assert d.points.tolist() == [30.0]
    assert entropy_discrete(d) == 0.0

def test_knn_distance_ties_prefer_lower_index():
    data = LabeledDataset(np.array([[0.0], [2.0], [-2.0]]), np.array([1.0, 2.0, 3.0]))
    r = knn_fit(data, 2)
    assert r.neighbors(np.array([0.0])).tolist() == [[0, 1]]
    np.testing.assert_array_equal(r.weights(np.array([0.0])), [0.5, 0.5, 0.0])

@pytest.mark.parametrize("k", [0, 4])
def test_knn_k_out_of_range(line, k):
    with pytest.raises(NeighborCountError):
        knn_fit(line, k)

def test_dimension_mismatch(line):
    with pytest.raises(DimensionError):
        knn_predict(knn_fit(line, 2), np.array([0.0, 1.0]))

def test_knn_matches_exhaustive_search():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n, d = int(rng.integers(1, 15)), int(rng.integers(1, 4))
        # Small integer grid so distance ties are common
        X = rng.integers(0, 3, size=(n, d)).astype(float)
        k = int(rng.integers(1, n + 1))
        r = knn_fit(LabeledDataset(X, rng.normal(size=n)), k)
        for x in rng.integers(0, 3, size=(5, d)).astype(float):
            dist = ((X - x) ** 2).sum(axis=1)
            expected = sorted(range(n), key=lambda i: (dist[i], i))[:k]
            assert r.neighbors(x)[0].tolist() == expected

def test_knn_locality():
    X = np.array([[0.0], [1.0], [5.0]])
    r = knn_fit(LabeledDataset(X, np.array([1.0, 2.0, 3.0])), 2)
    assert r.weights(np.array([5.0]))[2] == 0.5

def test_weights_are_probabilities(noisy):
    rng = np.random.default_rng(2)
    queries = rng.uniform(size=(100, 3))
    for r in (knn_fit(noisy, 7), forest_fit(noisy, ForestParams(num_trees=25, seed=3))):
        w = r.weights_batch(queries)
        assert w.shape == (100, noisy.n)
        assert w.min() >= 0
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)

def test_forest_two_points_forced_split():
    data = LabeledDataset(np.array([[0.0], [1.0]]), np.array([5.0, 7.0]))
    r = forest_fit(data, ForestParams(num_trees=1, sample_fraction=1.0, min_node_size=1))
    np.testing.assert_array_equal(r.weights(np.array([0.0])), [1.0, 0.0])
    np.testing.assert_array_equal(r.weights(np.array([0.9])), [0.0, 1.0])

def test_forest_constant_target():
    rng = np.random.default_rng(4)
    data = LabeledDataset(rng.uniform(size=(30, 2)), np.full(30, 4.0))
    d = forest_predict(forest_fit(data, ForestParams(num_trees=10)), rng.uniform(size=2))
    assert d.points.tolist() == [4.0]
    assert entropy_discrete(d) == 0.0

def test_forest_constant_features():
    data = LabeledDataset(np.ones((8, 2)), np.arange(8.0))
    r = forest_fit(data, ForestParams(num_trees=3, sample_fraction=1.0))
    assert all(t.leaf_count == 1 for t in r.trees)
    np.testing.assert_allclose(r.weights(np.ones(2)), np.full(8, 1 / 8))

def test_forest_is_deterministic(noisy):
    params = ForestParams(num_trees=20, sample_fraction=0.5, mtry=2, seed=11)
    queries = np.random.default_rng(5).uniform(size=(10, 3))
    w1 = forest_fit(noisy, params).weights_batch(queries)
    w2 = forest_fit(noisy, params, jobs=2).weights_batch(queries)
    np.testing.assert_array_equal(w1, w2)

def test_forest_needs_two_rows():
    with pytest.raises(DatasetError):
        forest_fit(LabeledDataset(np.zeros((1, 1)), np.zeros(1)), ForestParams(num_trees=1))

def test_select_k_singleton_grid(noisy):
    assert select_k(noisy, [1], seed=0) == 1

def test_select_k_prefers_small_k_on_noiseless_data():
    X = np.linspace(0.0, 1.0, 50)
    data = LabeledDataset(X, X)
    assert select_k(data, [1, data.n], val_fraction=0.2, seed=0) == 1

def test_select_k_ties_go_to_smaller_k():
    data = LabeledDataset(np.random.default_rng(6).uniform(size=(40, 1)), np.full(40, 1.0))
    assert select_k(data, [5, 2, 9], seed=0) == 2

def test_select_k_out_of_range(noisy):
    with pytest.raises(NeighborCountError):
        select_k(noisy, [1, noisy.n + 1])
    with pytest.raises(NeighborCountError):
        select_k(noisy, [])

def test_select_mtry(noisy):
    params = ForestParams(num_trees=10, seed=1)
    assert select_mtry(noisy, [2], params) == 2
    assert select_mtry(noisy, [1, 3], params) in (1, 3)
    with pytest.raises(ValueError):
        select_mtry(noisy, [4], params)

def test_rule_of_thumb_k():
    assert rule_of_thumb_k(1000, 1) == 100
    assert rule_of_thumb_k(200, 1) == 34
    assert rule_of_thumb_k(3, 1) == 2
    assert rule_of_thumb_k(1, 5) == 1
