"""Weight-generating regressors: distributional k-NN and a leaf-weight forest.

Both backends map a query ``x`` to probability weights over the training
rows; the predictive distribution is the training targets weighted
accordingly (:meth:`Regressor.predict`).
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .config import ForestParams
from .distributions import WeightedEmpirical, from_weighted_sample
from .scoring import mean_crps
from .tree import RegressionTree

logger = logging.getLogger(__name__)

# Queries per distance block in the k-NN search.
QUERY_BLOCK = 256


class DatasetError(ValueError):
    pass


class DimensionError(ValueError):
    pass


class NeighborCountError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        targets = np.array(self.targets, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2 or targets.ndim != 1:
            raise DatasetError("features must be an n x d matrix and targets a vector")
        if features.shape[0] == 0:
            raise DatasetError("dataset is empty")
        if features.shape[0] != targets.shape[0]:
            raise DatasetError(
                f"{features.shape[0]} feature rows but {targets.shape[0]} targets"
            )
        if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
            raise DatasetError("dataset contains non-finite values")
        features.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def subset(self, rows) -> "LabeledDataset":
        return LabeledDataset(self.features[rows], self.targets[rows])


class Regressor(ABC):
    """Fitted model producing probability weights over its training rows."""

    def __init__(self, data: LabeledDataset):
        self.data = data

    @property
    def targets(self) -> np.ndarray:
        return self.data.targets

    @property
    def dimension(self) -> int:
        return self.data.d

    def _check_queries(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise DimensionError(
                f"queries must have {self.dimension} features, got shape {X.shape}"
            )
        return X

    @abstractmethod
    def weights_batch(self, X) -> np.ndarray:
        """``(q, n)`` matrix of weights, one row per query."""

    def weights(self, x) -> np.ndarray:
        return self.weights_batch(x)[0]

    def predict(self, x) -> WeightedEmpirical:
        return from_weighted_sample(self.targets, self.weights(x))

    def predict_batch(self, X) -> List[WeightedEmpirical]:
        return [from_weighted_sample(self.targets, w) for w in self.weights_batch(X)]


class KNNRegressor(Regressor):
    """Analog method: weight 1/k on each of the k nearest training rows.

    Distance ties are broken in favour of the lower training index.
    """

    def __init__(self, data: LabeledDataset, k: int):
        if not 1 <= k <= data.n:
            raise NeighborCountError(f"k must lie in [1, {data.n}], got {k}")
        super().__init__(data)
        self.k = k

    def neighbors(self, X) -> np.ndarray:
        X = self._check_queries(X)
        out = np.empty((X.shape[0], self.k), dtype=int)
        train = self.data.features
        for start in range(0, X.shape[0], QUERY_BLOCK):
            block = X[start:start + QUERY_BLOCK]
            sq = ((block[:, None, :] - train[None, :, :]) ** 2).sum(axis=2)
            out[start:start + QUERY_BLOCK] = np.argsort(sq, axis=1, kind="stable")[:, :self.k]
        return out

    def weights_batch(self, X) -> np.ndarray:
        nearest = self.neighbors(X)
        w = np.zeros((nearest.shape[0], self.data.n))
        np.put_along_axis(w, nearest, 1.0 / self.k, axis=1)
        return w


def _grow_tree(data: LabeledDataset, params: ForestParams, mtry, seed) -> RegressionTree:
    rng = np.random.default_rng(seed)
    size = max(1, int(math.floor(params.sample_fraction * data.n)))
    rows = rng.choice(data.n, size=size, replace=False)
    tree = RegressionTree(min_node_size=params.min_node_size, mtry=mtry)
    return tree.fit(data.features, data.targets, rows, rng)


class ForestRegressor(Regressor):
    """Tree ensemble with weights ``(1/B) sum_b 1{X_i in L_b(x)} / |L_b(x)|``.

    Leaves hold in-bag rows only.
    """

    def __init__(self, data: LabeledDataset, params: ForestParams, trees: Sequence[RegressionTree]):
        super().__init__(data)
        self.params = params
        self.trees = list(trees)

    def weights_batch(self, X) -> np.ndarray:
        X = self._check_queries(X)
        w = np.zeros((X.shape[0], self.data.n))
        share = 1.0 / len(self.trees)
        for tree in self.trees:
            leaves = tree.apply(X)
            for leaf in np.unique(leaves):
                rows = tree.leaf_members(leaf)
                queries = np.nonzero(leaves == leaf)[0]
                w[np.ix_(queries, rows)] += share / rows.size
        return w


def knn_fit(data: LabeledDataset, k: int) -> KNNRegressor:
    return KNNRegressor(data, k)


def knn_predict(r: KNNRegressor, x) -> WeightedEmpirical:
    return r.predict(x)


def forest_fit(data: LabeledDataset, params: ForestParams, jobs: int = 1) -> ForestRegressor:
    if data.n < 2:
        raise DatasetError("the forest needs at least two training rows")
    mtry = None if params.mtry is None else min(params.mtry, data.d)
    seeds = np.random.SeedSequence(params.seed).spawn(params.num_trees)
    trees = Parallel(n_jobs=jobs)(
        delayed(_grow_tree)(data, params, mtry, s) for s in seeds
    )
    logger.info("grew %d trees on %d rows (mtry=%s)", len(trees), data.n, mtry or data.d)
    return ForestRegressor(data, params, trees)


def forest_predict(r: ForestRegressor, x) -> WeightedEmpirical:
    return r.predict(x)


def rule_of_thumb_k(n: int, d: int, h: float = 1.0) -> int:
    """``round(n ** (2h / (2h + d)))`` clipped to ``[1, n]``."""
    return int(min(n, max(1, round(n ** (2 * h / (2 * h + d))))))


def _holdout(data: LabeledDataset, val_fraction: float, seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    n_val = max(1, int(math.floor(val_fraction * data.n)))
    if data.n - n_val < 1:
        raise DatasetError(f"{data.n} rows are too few for a holdout split")
    order = np.random.default_rng(seed).permutation(data.n)
    return data.subset(order[n_val:]), data.subset(order[:n_val])


def _select(candidates, fit, data: LabeledDataset, val_fraction: float, seed: int):
    train, holdout = _holdout(data, val_fraction, seed)
    best, best_score = None, math.inf
    for value in candidates:
        model = fit(train, value)
        score = mean_crps(model.predict_batch(holdout.features), holdout.targets)
        logger.debug("holdout CRPS %.6g for %s", score, value)
        if score < best_score:
            best, best_score = value, score
    return best


def select_k(data: LabeledDataset, grid: Sequence[int], val_fraction: float = 0.2, seed: int = 0) -> int:
    """Grid value of k with the lowest holdout mean CRPS; ties go to the smaller k.

    Values above the size of the fitting part of the holdout split are
    clipped to it for scoring.
    """
    grid = sorted({int(k) for k in grid})
    if not grid:
        raise NeighborCountError("k grid is empty")
    if grid[0] < 1 or grid[-1] > data.n:
        raise NeighborCountError(f"k grid must lie in [1, {data.n}], got {grid}")

    def fit(train: LabeledDataset, k: int) -> KNNRegressor:
        if k > train.n:
            logger.warning("k=%d clipped to %d for holdout scoring", k, train.n)
        return knn_fit(train, min(k, train.n))

    k = _select(grid, fit, data, val_fraction, seed)
    logger.info("selected k=%d from %s", k, grid)
    return k


def select_mtry(
    data: LabeledDataset,
    grid: Sequence[int],
    params: Optional[ForestParams] = None,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> int:
    """Forest counterpart of :func:`select_k` over candidate ``mtry`` values."""
    params = params or ForestParams()
    grid = sorted({int(m) for m in grid})
    if not grid or grid[0] < 1 or grid[-1] > data.d:
        raise ValueError(f"mtry grid must lie in [1, {data.d}], got {grid}")

    def fit(train: LabeledDataset, mtry: int) -> ForestRegressor:
        return forest_fit(train, params.model_copy(update={"mtry": mtry}))

    mtry = _select(grid, fit, data, val_fraction, seed)
    logger.info("selected mtry=%d from %s", mtry, grid)
    return mtry
