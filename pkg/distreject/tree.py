"""CART regression tree that remembers which training rows end in each leaf.

The forest backend never uses the leaf means: it only needs, for a query
point, the set of in-bag training rows sharing its leaf.  Nodes are kept in
flat arrays, as in array-based tree implementations, so that ``apply`` can
route a whole batch of queries at once.
"""
from typing import List, Optional, Tuple

import numpy as np

LEAF = -1


class RegressionTree:
    """Variance-reduction CART tree.

    A node holding more than ``min_node_size`` rows is split on the best of
    ``mtry`` randomly drawn features.  Candidate thresholds are midpoints
    between consecutive distinct values; ties in gain go to the lowest
    feature index, then to the lowest threshold.
    """

    def __init__(self, min_node_size: int = 1, mtry: Optional[int] = None):
        self.min_node_size = min_node_size
        self.mtry = mtry
        self.feature: np.ndarray = np.empty(0, dtype=int)
        self.threshold: np.ndarray = np.empty(0)
        self.left: np.ndarray = np.empty(0, dtype=int)
        self.right: np.ndarray = np.empty(0, dtype=int)
        self.members: List[Optional[np.ndarray]] = []

    @property
    def node_count(self) -> int:
        return len(self.members)

    @property
    def leaf_count(self) -> int:
        return sum(m is not None for m in self.members)

    def fit(self, X: np.ndarray, y: np.ndarray, rows: np.ndarray, rng: np.random.Generator):
        """Grow the tree on the training rows ``rows`` of ``(X, y)``."""
        mtry = X.shape[1] if self.mtry is None else max(1, min(self.mtry, X.shape[1]))
        feature, threshold, left, right = [], [], [], []
        members: List[Optional[np.ndarray]] = []

        def new_node() -> int:
            feature.append(LEAF)
            threshold.append(np.nan)
            left.append(LEAF)
            right.append(LEAF)
            members.append(None)
            return len(members) - 1

        stack = [(new_node(), np.sort(np.asarray(rows, dtype=int)))]
        while stack:
            node, idx = stack.pop()
            split = None
            if idx.size > self.min_node_size:
                split = self._best_split(X, y, idx, mtry, rng)
            if split is None:
                members[node] = idx
                continue
            f, thr = split
            goes_left = X[idx, f] <= thr
            left_id, right_id = new_node(), new_node()
            feature[node], threshold[node] = f, thr
            left[node], right[node] = left_id, right_id
            stack.append((right_id, idx[~goes_left]))
            stack.append((left_id, idx[goes_left]))

        self.feature = np.asarray(feature, dtype=int)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=int)
        self.right = np.asarray(right, dtype=int)
        self.members = members
        return self

    @staticmethod
    def _best_split(
        X: np.ndarray, y: np.ndarray, idx: np.ndarray, mtry: int, rng: np.random.Generator
    ) -> Optional[Tuple[int, float]]:
        targets = y[idx]
        if np.ptp(targets) == 0:
            return None
        centered = targets - targets.mean()
        n = idx.size
        n_left = np.arange(1, n)
        n_right = n - n_left
        total = centered.sum()

        best_gain, best = 0.0, None
        for f in np.sort(rng.choice(X.shape[1], size=mtry, replace=False)):
            values = X[idx, f]
            order = np.argsort(values, kind="stable")
            xs, ys = values[order], centered[order]
            distinct = xs[1:] > xs[:-1]
            if not distinct.any():
                continue
            left_sum = np.cumsum(ys)[:-1]
            gain = left_sum ** 2 / n_left + (total - left_sum) ** 2 / n_right - total ** 2 / n
            gain = np.where(distinct, gain, -np.inf)
            i = int(np.argmax(gain))
            if gain[i] > best_gain:
                thr = 0.5 * (xs[i] + xs[i + 1])
                if not xs[i] <= thr < xs[i + 1]:
                    thr = xs[i]
                best_gain, best = gain[i], (int(f), float(thr))
        return best

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by every row of ``X``."""
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=int)
        while True:
            f = self.feature[node]
            active = np.nonzero(f != LEAF)[0]
            if active.size == 0:
                return node
            current = node[active]
            goes_left = X[active, f[active]] <= self.threshold[current]
            node[active] = np.where(goes_left, self.left[current], self.right[current])

    def leaf_members(self, leaf: int) -> np.ndarray:
        return self.members[leaf]
