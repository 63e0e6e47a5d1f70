"""Selective prediction: entropy scores, calibration and the reject rules.

A regressor's predictive distribution is scored by its CRPS entropy plus
a tiny uniform jitter ``zeta ~ U[0, u]``.  The jittered scores of the
unlabeled split form a :class:`CalibrationTable`; the epsilon rule accepts a
query whenever the table's empirical CDF at the query's score is at most
``1 - epsilon``.  The lambda rule thresholds the entropy directly.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .backends import Regressor
from .distributions import Distribution
from .scoring import entropy, entropy_discrete
from .utils import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-10


def jitter_for_sample_size(n: int) -> float:
    """Jitter magnitude ``1/n`` for ``n`` labeled points."""
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    return 1.0 / n


@dataclass(frozen=True, eq=False)
class CalibrationTable:
    scores: np.ndarray
    jitter: float
    seed: int

    def __post_init__(self):
        scores = np.array(self.scores, dtype=float).ravel()
        if scores.size == 0:
            raise ValueError("calibration table is empty")
        if not np.all(np.isfinite(scores)):
            raise ArithmeticError("calibration scores must be finite")
        if np.any(np.diff(scores) < 0):
            raise ValueError("calibration scores must be sorted ascending")
        if self.jitter < 0:
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    @property
    def size(self) -> int:
        return int(self.scores.size)

    def ecdf(self, s):
        """Fraction of stored scores ``<= s``; vectorized over ``s``."""
        counts = np.searchsorted(self.scores, s, side="right")
        values = counts / self.size
        if np.ndim(values) == 0:
            return float(values)
        return values


def ecdf(table: CalibrationTable, s):
    return table.ecdf(s)


def _draw_jitter(rng: np.random.Generator, u: float, size: int) -> np.ndarray:
    if u == 0:
        return np.zeros(size)
    return rng.uniform(0.0, u, size=size)


def entropy_scores(r: Regressor, unlabeled, u: float = DEFAULT_JITTER, seed: int = 0) -> CalibrationTable:
    """Jittered entropies of ``r``'s predictions on the unlabeled rows."""
    if u < 0:
        raise ValueError(f"jitter must be nonnegative, got {u}")
    entropies = np.array([entropy_discrete(d) for d in r.predict_batch(unlabeled)])
    if entropies.size == 0:
        raise ValueError("no unlabeled rows to calibrate on")
    rng = np.random.default_rng(seed)
    scores = np.sort(entropies + _draw_jitter(rng, u, entropies.size))
    logger.debug("calibration table of %d scores, median %.6g", scores.size, np.median(scores))
    return CalibrationTable(scores=scores, jitter=u, seed=seed)


@dataclass(frozen=True)
class RejectPrediction:
    """Either an accepted predictive distribution or a rejection."""

    distribution: Optional[Distribution] = None

    @classmethod
    def accept(cls, distribution: Distribution) -> "RejectPrediction":
        return cls(distribution)

    @classmethod
    def reject(cls) -> "RejectPrediction":
        return cls(None)

    @property
    def accepted(self) -> bool:
        return self.distribution is not None


class EpsilonPolicy:
    """Calibrated epsilon rule with its own query-jitter generator.

    ``epsilon = 0`` never rejects and ``epsilon = 1`` always rejects.  The
    generator is not synchronized: give each worker its own policy.
    """

    def __init__(self, epsilon: float, calibration: CalibrationTable, seed: Optional[int] = None):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
        self.epsilon = float(epsilon)
        self.calibration = calibration
        self.seed = derive_seed(calibration.seed, 1) if seed is None else seed
        self.rng = np.random.default_rng(self.seed)

    @property
    def jitter(self) -> float:
        return self.calibration.jitter

    def draw_jitter(self, size: int = 1) -> np.ndarray:
        return _draw_jitter(self.rng, self.jitter, size)

    def accepts(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        if self.epsilon == 0.0:
            return np.ones(scores.shape, dtype=bool)
        if self.epsilon == 1.0:
            return np.zeros(scores.shape, dtype=bool)
        return np.asarray(self.calibration.ecdf(scores) <= 1.0 - self.epsilon)


def acceptance_threshold(policy: EpsilonPolicy) -> float:
    """Score at which the epsilon rule switches from accept to reject.

    A score ``s`` is accepted iff ``s < acceptance_threshold(policy)``.  The
    threshold is the ``(m+1)``-th smallest table score, with ``m`` the
    largest count satisfying ``m / N <= 1 - epsilon`` (``+inf`` when
    ``m = N``).
    """
    if policy.epsilon == 1.0:
        return -math.inf
    scores = policy.calibration.scores
    levels = np.arange(scores.size + 1) / scores.size
    m = int(np.searchsorted(levels, 1.0 - policy.epsilon, side="right")) - 1
    if m >= scores.size:
        return math.inf
    return float(scores[m])


def predict_epsilon(policy: EpsilonPolicy, r: Regressor, x, zeta: Optional[float] = None) -> RejectPrediction:
    """Accept iff ``ecdf(Ent(predict(r, x)) + zeta) <= 1 - epsilon``.

    ``zeta`` defaults to a fresh draw from the policy's generator.
    """
    if zeta is None:
        zeta = float(policy.draw_jitter(1)[0])
    elif not 0.0 <= zeta <= policy.jitter:
        raise ValueError(f"zeta must lie in [0, {policy.jitter}], got {zeta}")
    dist = r.predict(x)
    if policy.accepts(entropy_discrete(dist) + zeta):
        return RejectPrediction.accept(dist)
    return RejectPrediction.reject()


def predict_lambda(r: Regressor, lam: float, x) -> RejectPrediction:
    """Accept iff the predicted entropy is at most ``lam``."""
    if not lam >= 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    dist = r.predict(x)
    if entropy_discrete(dist) <= lam:
        return RejectPrediction.accept(dist)
    return RejectPrediction.reject()


class SelectivePredictor(ABC):
    """Anything that maps query rows to accept/reject decisions."""

    @abstractmethod
    def predict_batch(self, X) -> List[RejectPrediction]:
        pass

    def __call__(self, x) -> RejectPrediction:
        return self.predict_batch(np.atleast_2d(np.asarray(x, dtype=float)))[0]


class _EntropyRule(SelectivePredictor):
    def __init__(self, regressor: Regressor):
        self.regressor = regressor

    @abstractmethod
    def _accepts(self, entropies: np.ndarray) -> np.ndarray:
        pass

    def predict_batch(self, X) -> List[RejectPrediction]:
        dists = self.regressor.predict_batch(X)
        entropies = np.array([entropy(d) for d in dists])
        mask = self._accepts(entropies)
        return [
            RejectPrediction.accept(d) if ok else RejectPrediction.reject()
            for d, ok in zip(dists, mask)
        ]


class EpsilonPredictor(_EntropyRule):
    """Plug-in epsilon predictor with one fresh jitter draw per query."""

    def __init__(self, regressor: Regressor, policy: EpsilonPolicy):
        super().__init__(regressor)
        self.policy = policy

    @property
    def epsilon(self) -> float:
        return self.policy.epsilon

    def _accepts(self, entropies):
        return self.policy.accepts(entropies + self.policy.draw_jitter(entropies.size))


class LambdaPredictor(_EntropyRule):
    def __init__(self, regressor: Regressor, lam: float):
        if not lam >= 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        super().__init__(regressor)
        self.lam = float(lam)

    def _accepts(self, entropies):
        return entropies <= self.lam


def calibrate(
    regressor: Regressor,
    unlabeled,
    epsilon: float,
    u: float = DEFAULT_JITTER,
    seed: int = 0,
) -> EpsilonPredictor:
    """Score the unlabeled rows and wrap ``regressor`` in an epsilon predictor."""
    table = entropy_scores(regressor, unlabeled, u=u, seed=seed)
    return EpsilonPredictor(regressor, EpsilonPolicy(epsilon, table))
