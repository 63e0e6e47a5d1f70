import logging
import math
import os
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import pandas as pd

from .backends import DatasetError, LabeledDataset
from .config import SplitSpec

logger = logging.getLogger(__name__)


class DataFormatError(ValueError):
    pass


def load_csv(path: str, target_column: str) -> LabeledDataset:
    """Read a numeric CSV; every column except ``target_column`` is a feature.

    Features keep the header order.  Empty or non-numeric cells raise
    :class:`DataFormatError` naming the data row (1-based) and column.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataFormatError(f"{path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise DataFormatError(f"{path}: {e}") from e

    if target_column not in frame.columns:
        raise DataFormatError(f"{path}: no column named {target_column!r}")
    if len(frame) == 0:
        raise DataFormatError(f"{path}: no data rows")
    if frame.shape[1] < 2:
        raise DataFormatError(f"{path}: no feature columns besides {target_column!r}")

    values = {}
    for column in frame.columns:
        raw = frame[column].str.strip()
        parsed = pd.to_numeric(raw, errors="coerce")
        bad = ~np.isfinite(parsed.to_numpy(dtype=float))
        if bad.any():
            row = int(np.argmax(bad))
            cell = raw.iloc[row]
            what = "empty cell" if cell == "" else f"non-numeric value {cell!r}"
            raise DataFormatError(f"{path}: {what} at row {row + 1}, column {column!r}")
        values[column] = parsed.to_numpy(dtype=float)

    features = [c for c in frame.columns if c != target_column]
    X = np.column_stack([values[c] for c in features])
    logger.info("loaded %s: %d rows, %d features", path, X.shape[0], X.shape[1])
    return LabeledDataset(X, values[target_column])


def split(data: LabeledDataset, spec: SplitSpec) -> Tuple[LabeledDataset, np.ndarray, LabeledDataset]:
    """Seeded shuffle into labeled, unlabeled (features only) and test parts.

    The labeled and unlabeled sizes are ``floor(fraction * n)``; the test
    part takes the remainder.
    """
    n = data.n
    if n < 3:
        raise DatasetError(f"cannot split {n} rows into three parts")
    n_labeled = int(math.floor(spec.labeled_frac * n))
    n_unlabeled = int(math.floor(spec.unlabeled_frac * n))
    n_test = n - n_labeled - n_unlabeled
    if min(n_labeled, n_unlabeled, n_test) < 1:
        raise DatasetError(
            f"split of {n} rows gives empty parts ({n_labeled}/{n_unlabeled}/{n_test})"
        )
    order = np.random.default_rng(spec.seed).permutation(n)
    labeled = data.subset(order[:n_labeled])
    unlabeled = data.features[order[n_labeled:n_labeled + n_unlabeled]]
    test = data.subset(order[n_labeled + n_unlabeled:])
    return labeled, unlabeled, test


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, features) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1) if self.mean.size == 1 else features.reshape(1, -1)
        if features.shape[1] != self.mean.size:
            raise DatasetError(
                f"standardizer fitted on {self.mean.size} features, got {features.shape[1]}"
            )
        return (features - self.mean) / self.scale


def standardize_fit(labeled: Union[LabeledDataset, np.ndarray]) -> Standardizer:
    """Per-feature mean and standard deviation; constant features pass through."""
    X = labeled.features if isinstance(labeled, LabeledDataset) else np.atleast_2d(labeled)
    if X.shape[0] == 0:
        raise DatasetError("cannot standardize on an empty sample")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    constant = np.ptp(X, axis=0) == 0
    if constant.any():
        logger.warning("constant feature columns %s left unscaled", np.nonzero(constant)[0].tolist())
        mean[constant] = 0.0
        scale[constant] = 1.0
    return Standardizer(mean=mean, scale=scale)


def standardize_apply(s: Standardizer, features) -> np.ndarray:
    return s.apply(features)


def standardize_dataset(s: Standardizer, data: LabeledDataset) -> LabeledDataset:
    return LabeledDataset(s.apply(data.features), data.targets)
