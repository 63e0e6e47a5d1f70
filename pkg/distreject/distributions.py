"""One-dimensional predictive distributions.

Every predictive distribution produced by the package is either a
:class:`WeightedEmpirical` (a finite weighted sample, as returned by the
k-NN and forest backends) or a :class:`GaussianPredictive`.  Both can be
turned into a :class:`CdfFunction`, the uniform interface used by the
numerical-integration oracles in :mod:`distreject.scoring`.
"""
from dataclasses import dataclass, field
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

# Half-width, in standard deviations, of the integration window of a Gaussian.
GAUSSIAN_BOUND_SIGMAS = 10.0
CDF_TOLERANCE = 1e-9


class DistributionError(ValueError):
    """Base class for invalid distribution inputs."""


class EmptySampleError(DistributionError):
    pass


class NegativeWeightError(DistributionError):
    pass


class ZeroMassError(DistributionError):
    pass


class LengthMismatchError(DistributionError):
    pass


class QuantileLevelError(DistributionError):
    pass


class InvalidStddevError(DistributionError):
    pass


class NonMonotoneCdfError(DistributionError):
    pass


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class WeightedEmpirical:
    """Discrete law ``sum_i w_i * delta(y_i)`` with strictly increasing support.

    Instances are normally built through :func:`from_weighted_sample`, which
    sorts, merges duplicates and normalizes.  The arrays are read-only.
    """

    points: np.ndarray
    weights: np.ndarray
    cumulative: np.ndarray = field(init=False, repr=False)
    _steps: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cumulative = np.cumsum(self.weights)
        cumulative[-1] = 1.0
        object.__setattr__(self, "cumulative", _frozen(cumulative))
        object.__setattr__(self, "_steps", _frozen(np.concatenate(([0.0], cumulative))))

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def lower(self) -> float:
        return float(self.points[0])

    @property
    def upper(self) -> float:
        return float(self.points[-1])

    def mean(self) -> float:
        return float(np.dot(self.points, self.weights))

    def cdf(self, u):
        """Right-continuous step CDF; accepts scalars or arrays."""
        values = self._steps[np.searchsorted(self.points, u, side="right")]
        if np.ndim(values) == 0:
            return float(values)
        return values

    def quantile(self, p: float) -> float:
        """Generalized inverse ``inf{t : CDF(t) >= p}`` for ``p`` in (0, 1]."""
        if not (0.0 < p <= 1.0):
            raise QuantileLevelError(f"quantile level must lie in (0, 1], got {p}")
        idx = int(np.searchsorted(self.cumulative, p, side="left"))
        return float(self.points[min(idx, self.size - 1)])

    def shift(self, c: float) -> "WeightedEmpirical":
        return from_weighted_sample(self.points + c, self.weights)

    def as_cdf_function(self) -> "CdfFunction":
        return CdfFunction(
            func=self.cdf,
            lo=self.lower - 1.0,
            hi=self.upper + 1.0,
            breakpoints=tuple(float(p) for p in self.points),
        )


@dataclass(frozen=True)
class GaussianPredictive:
    mean: float
    stddev: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.stddev)):
            raise InvalidStddevError("gaussian parameters must be finite")
        if self.stddev <= 0:
            raise InvalidStddevError(f"stddev must be positive, got {self.stddev}")

    def cdf(self, u):
        values = ndtr((np.asarray(u, dtype=float) - self.mean) / self.stddev)
        if np.ndim(values) == 0:
            return float(values)
        return values

    def quantile(self, p: float) -> float:
        if not (0.0 < p <= 1.0):
            raise QuantileLevelError(f"quantile level must lie in (0, 1], got {p}")
        return float(norm.ppf(p, loc=self.mean, scale=self.stddev))

    def as_cdf_function(self) -> "CdfFunction":
        half = GAUSSIAN_BOUND_SIGMAS * self.stddev
        bulk = (self.mean - self.stddev, self.mean, self.mean + self.stddev)
        return CdfFunction(func=self.cdf, lo=self.mean - half, hi=self.mean + half, breakpoints=bulk)


@dataclass(frozen=True)
class CdfFunction:
    """Evaluable CDF with finite integration bounds.

    ``breakpoints`` lists the jump locations of a discontinuous CDF, or
    where a smooth one does most of its rising; the quadrature routines
    integrate piecewise between them.
    """

    func: Callable[[float], float]
    lo: float
    hi: float
    breakpoints: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DistributionError(f"empty integration window [{self.lo}, {self.hi}]")
        if self.func(self.lo) > CDF_TOLERANCE:
            raise DistributionError(f"CDF at lower bound {self.lo} exceeds {CDF_TOLERANCE}")
        if self.func(self.hi) < 1.0 - CDF_TOLERANCE:
            raise DistributionError(f"CDF at upper bound {self.hi} is below 1 - {CDF_TOLERANCE}")

    def __call__(self, u: float) -> float:
        return float(self.func(u))

    def check_monotone(self, resolution: int = 257) -> None:
        grid = np.union1d(np.linspace(self.lo, self.hi, resolution), self.breakpoints)
        try:
            values = np.asarray(self.func(grid), dtype=float)
            if values.shape != grid.shape:
                raise ValueError("scalar-only CDF")
        except (TypeError, ValueError):
            values = np.array([float(self.func(u)) for u in grid])
        if np.any(np.diff(values) < -CDF_TOLERANCE):
            raise NonMonotoneCdfError("CDF is not nondecreasing on its integration window")


Distribution = Union[WeightedEmpirical, GaussianPredictive]


def from_weighted_sample(values: Sequence[float], weights: Sequence[float]) -> WeightedEmpirical:
    """Build a normalized :class:`WeightedEmpirical` from a weighted sample.

    Equal values are merged (weights summed) and zero-weight atoms dropped,
    which leaves the CDF unchanged.
    """
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if values.size == 0:
        raise EmptySampleError("weighted sample is empty")
    if values.shape != weights.shape:
        raise LengthMismatchError(
            f"{values.size} values but {weights.size} weights"
        )
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(weights))):
        raise DistributionError("weighted sample contains non-finite entries")
    if np.any(weights < 0):
        raise NegativeWeightError("weights must be nonnegative")
    total = weights.sum()
    if total <= 0:
        raise ZeroMassError("weights sum to zero")

    points, inverse = np.unique(values, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=weights, minlength=points.size)
    keep = merged > 0
    points = points[keep]
    merged = merged[keep] / total
    merged = merged / merged.sum()
    return WeightedEmpirical(points=_frozen(points), weights=_frozen(merged))


def point_mass(value: float) -> WeightedEmpirical:
    return from_weighted_sample([value], [1.0])


def cdf_eval(d: WeightedEmpirical, u: float) -> float:
    return float(d.cdf(u))


def quantile(d: WeightedEmpirical, p: float) -> float:
    return d.quantile(p)
