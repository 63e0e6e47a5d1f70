import numpy as np
import pytest
from distreject.backends import DatasetError, LabeledDataset
from distreject.config import SplitSpec
from distreject.data_io import DataFormatError, load_csv, split, standardize_apply, standardize_dataset, standardize_fit

@pytest.fixture
def csv_file(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("a,y,b\n1.0,10,0.5\n2.0,20,1.5\n3.5,30,-2\n")
    return str(path)

def indexed(n):
    # Row i carries feature i, so partitions can be traced back
    return LabeledDataset(np.arange(n, dtype=float).reshape(-1, 1), np.arange(n, dtype=float) * 10)

def test_load_csv(csv_file):
    data = load_csv(csv_file, "y")
    assert (data.n, data.d) == (3, 2)
    # Features keep header order without the target
    assert data.features[0].tolist() == [1.0, 0.5]
    assert data.features[2].tolist() == [3.5, -2.0]
    assert data.targets.tolist() == [10.0, 20.0, 30.0]

def test_load_csv_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(str(tmp_path / "nope.csv"), "y")

def test_load_csv_missing_column(csv_file):
    with pytest.raises(DataFormatError, match="'target'"):
        load_csv(csv_file, "target")

def test_load_csv_non_numeric_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,y\n1,2\n3,abc\n")
    with pytest.raises(DataFormatError) as e:
        load_csv(str(path), "y")
    assert "row 2" in str(e.value)
    assert "'y'" in str(e.value)
    assert "abc" in str(e.value)

def test_load_csv_empty_cell(tmp_path):
    path = tmp_path / "gap.csv"
    path.write_text("a,y\n1,2\n,4\n")
    with pytest.raises(DataFormatError, match="empty cell at row 2, column 'a'"):
        load_csv(str(path), "y")

def test_load_csv_header_only(tmp_path):
    path = tmp_path / "header.csv"
    path.write_text("a,y\n")
    with pytest.raises(DataFormatError):
        load_csv(str(path), "y")

def test_load_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(DataFormatError):
        load_csv(str(path), "y")

@pytest.mark.parametrize("n, sizes", [(546, (273, 109, 164)), (10, (5, 2, 3))])
def test_split_sizes(n, sizes):
    labeled, unlabeled, test = split(indexed(n), SplitSpec())
    assert (labeled.n, unlabeled.shape[0], test.n) == sizes

def test_split_partitions_rows():
    data = indexed(101)
    labeled, unlabeled, test = split(data, SplitSpec(seed=5))
    ids = np.concatenate([labeled.features[:, 0], unlabeled[:, 0], test.features[:, 0]])
    assert sorted(ids.tolist()) == list(range(101))
    # Targets stay attached to their features
    np.testing.assert_array_equal(labeled.targets, labeled.features[:, 0] * 10)
    np.testing.assert_array_equal(test.targets, test.features[:, 0] * 10)

def test_split_is_deterministic():
    a = split(indexed(50), SplitSpec(seed=3))
    b = split(indexed(50), SplitSpec(seed=3))
    c = split(indexed(50), SplitSpec(seed=4))
    np.testing.assert_array_equal(a[0].features, b[0].features)
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0].features, c[0].features)

def test_split_too_small():
    with pytest.raises(DatasetError):
        split(indexed(2), SplitSpec())
    with pytest.raises(DatasetError):
        # floor(0.2 * 4) = 0 unlabeled rows
        split(indexed(4), SplitSpec())

def test_standardize_fit_apply():
    rng = np.random.default_rng(0)
    X = rng.normal(loc=3.0, scale=2.0, size=(200, 3))
    z = standardize_apply(standardize_fit(X), X)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)

def test_standardize_constant_column(caplog):
    X = np.column_stack([np.full(5, 4.0), np.arange(5.0)])
    s = standardize_fit(X)
    assert s.scale[0] == 1.0
    z = standardize_apply(s, X)
    np.testing.assert_array_equal(z[:, 0], X[:, 0])
    assert "constant feature" in caplog.text

def test_standardize_uses_fit_statistics():
    labeled = LabeledDataset(np.array([[0.0], [2.0]]), np.array([1.0, 2.0]))
    s = standardize_fit(labeled)
    np.testing.assert_allclose(standardize_apply(s, np.array([[4.0], [1.0]])), [[3.0], [0.0]])
    assert standardize_dataset(s, labeled).targets.tolist() == [1.0, 2.0]
    with pytest.raises(DatasetError):
        standardize_apply(s, np.zeros((2, 3)))
