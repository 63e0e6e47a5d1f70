"""Synthetic models with a known conditional law, and the oracle quantities.

Features are uniform on ``[0, 1]^d`` and ``Y | X = x ~ N(m(x), sigma(x)^2)``
with ``m`` a polynomial and ``sigma`` affine in the first feature, so the
true entropy ``sigma(x) / sqrt(pi)`` and its quantiles are available in
closed form.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Tuple

import numpy as np

from .backends import LabeledDataset, Regressor
from .config import ConfigError
from .distributions import GaussianPredictive
from .scoring import SQRT_PI, divergence, entropy, wasserstein1
from .selective import RejectPrediction, SelectivePredictor

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-12
MAX_BRUTE_FORCE_SUPPORT = 20
TIE_TOLERANCE = 1e-12


class SupportSizeError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticModel:
    """``m(x) = sum_j mean[j] * x0**j`` and ``sigma(x) = a + b * x0``."""

    d: int = 1
    mean: Tuple[float, ...] = (0.0,)
    sigma_intercept: float = 0.0
    sigma_slope: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"feature dimension must be positive, got {self.d}")
        if not self.mean:
            raise ConfigError("mean polynomial needs at least one coefficient")
        a, b = self.sigma_intercept, self.sigma_slope
        if a < 0 or a + b < 0:
            raise ConfigError(f"sigma = {a} + {b} * x0 is negative on [0, 1]")

    @property
    def constant_sigma(self) -> bool:
        return self.sigma_slope == 0.0

    def mean_at(self, X) -> np.ndarray:
        x0 = np.atleast_2d(np.asarray(X, dtype=float))[:, 0]
        return np.polynomial.polynomial.polyval(x0, self.mean)

    def stddev_at(self, X) -> np.ndarray:
        x0 = np.atleast_2d(np.asarray(X, dtype=float))[:, 0]
        return np.maximum(self.sigma_intercept + self.sigma_slope * x0, SIGMA_FLOOR)

    def true_entropy(self, X) -> np.ndarray:
        return self.stddev_at(X) / SQRT_PI

    def true_distribution(self, x) -> GaussianPredictive:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return GaussianPredictive(float(self.mean_at(x)[0]), float(self.stddev_at(x)[0]))

    def sample_features(self, n: int, seed: int) -> np.ndarray:
        if n < 1:
            raise ValueError(f"sample size must be positive, got {n}")
        return np.random.default_rng(seed).uniform(size=(n, self.d))

    def sample(self, n: int, seed: int) -> LabeledDataset:
        if n < 1:
            raise ValueError(f"sample size must be positive, got {n}")
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(n, self.d))
        Y = self.mean_at(X) + self.stddev_at(X) * rng.standard_normal(n)
        return LabeledDataset(X, Y)


PRESETS: Dict[str, Dict] = {
    "sigma-linear": dict(mean=(0.0,), sigma_intercept=0.0, sigma_slope=1.0),
    "sigma-constant": dict(mean=(0.0,), sigma_intercept=1.0, sigma_slope=0.0),
    "heteroscedastic-poly": dict(mean=(0.0, 2.0, -1.0), sigma_intercept=0.2, sigma_slope=0.8),
}


def make_model(name: str, params: Optional[Mapping[str, float]] = None) -> SyntheticModel:
    """Build a preset, overriding ``d``, ``sigma_intercept``, ``sigma_slope``
    or mean coefficients given as ``mean0``, ``mean1``, ...
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown synthetic model {name!r}; choose from {sorted(PRESETS)}")
    kwargs = dict(PRESETS[name], name=name)
    coefs = list(kwargs["mean"])
    for key, value in (params or {}).items():
        if key == "d":
            if value != int(value):
                raise ConfigError(f"d must be an integer, got {value}")
            kwargs["d"] = int(value)
        elif key in ("sigma_intercept", "sigma_slope"):
            kwargs[key] = float(value)
        elif key.startswith("mean") and key[4:].isdigit():
            power = int(key[4:])
            coefs.extend([0.0] * (power + 1 - len(coefs)))
            coefs[power] = float(value)
        else:
            raise ConfigError(f"unknown parameter {key!r} for synthetic model {name!r}")
    kwargs["mean"] = tuple(coefs)
    model = SyntheticModel(**kwargs)
    if model.constant_sigma:
        logger.warning(
            "model %r has constant sigma: the entropy has an atom and epsilon "
            "calibration loses its guarantee", name,
        )
    return model


def sample(model: SyntheticModel, n: int, seed: int) -> LabeledDataset:
    return model.sample(n, seed)


def sample_features(model: SyntheticModel, n: int, seed: int) -> np.ndarray:
    return model.sample_features(n, seed)


def true_entropy(model: SyntheticModel, x) -> float:
    return float(model.true_entropy(x)[0])


# --- Oracle rule ---

@dataclass(frozen=True)
class OracleRule:
    lambda_eps: float
    epsilon: float

    def __post_init__(self):
        if not self.lambda_eps >= 0:
            raise ValueError(f"oracle threshold must be nonnegative, got {self.lambda_eps}")


def oracle_lambda(
    model: SyntheticModel,
    epsilon: float,
    mc_size: int = 100_000,
    seed: int = 0,
    closed_form: bool = True,
) -> OracleRule:
    """``(1 - epsilon)``-quantile of the true entropy under the feature law.

    With ``X0 ~ U[0, 1]`` the entropy is uniform between ``sigma(0)`` and
    ``sigma(1)`` (over ``sqrt(pi)``), which gives the closed form; pass
    ``closed_form=False`` for the Monte-Carlo quantile.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if closed_form:
        a, b = model.sigma_intercept, model.sigma_slope
        level = 1.0 - epsilon if b > 0 else epsilon
        lam = max(a + b * level, SIGMA_FLOOR) / SQRT_PI
    else:
        entropies = model.true_entropy(model.sample_features(mc_size, seed))
        lam = float(np.quantile(entropies, 1.0 - epsilon, method="inverted_cdf"))
    return OracleRule(lambda_eps=float(lam), epsilon=epsilon)


class OraclePredictor(SelectivePredictor):
    """Predicts the true law and accepts iff its entropy is at most ``threshold``.

    ``threshold=inf`` never rejects; ``threshold=-inf`` always rejects.
    """

    def __init__(self, model: SyntheticModel, threshold: float):
        self.model = model
        self.threshold = float(threshold)

    @classmethod
    def from_rule(cls, model: SyntheticModel, oracle: OracleRule) -> "OraclePredictor":
        return cls(model, oracle.lambda_eps)

    def predict_batch(self, X) -> List[RejectPrediction]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        means, stddevs = self.model.mean_at(X), self.model.stddev_at(X)
        accept = stddevs / SQRT_PI <= self.threshold
        return [
            RejectPrediction.accept(GaussianPredictive(float(m), float(s))) if ok
            else RejectPrediction.reject()
            for m, s, ok in zip(means, stddevs, accept)
        ]


class ExcessRisk(NamedTuple):
    divergence: float
    disagreement: float

    @property
    def total(self) -> float:
        return self.divergence + self.disagreement


def excess_risk_terms(
    predictor: SelectivePredictor,
    model: SyntheticModel,
    oracle: OracleRule,
    mc_size: int = 2000,
    seed: int = 0,
) -> ExcessRisk:
    """Monte-Carlo estimates of the two excess-risk terms.

    ``E[Div(F, F*) 1{accept}]`` and ``E[|Ent(F*) - lambda| 1{decision differs
    from the oracle's}]``.
    """
    X = model.sample_features(mc_size, seed)
    predictions = predictor.predict_batch(X)
    true_entropies = model.true_entropy(X)
    oracle_accepts = true_entropies <= oracle.lambda_eps

    div_total = 0.0
    accepts = np.zeros(mc_size, dtype=bool)
    for i, p in enumerate(predictions):
        if p.accepted:
            accepts[i] = True
            div_total += divergence(p.distribution, model.true_distribution(X[i]))
    disagreement = np.abs(true_entropies - oracle.lambda_eps) * (accepts != oracle_accepts)
    return ExcessRisk(div_total / mc_size, float(disagreement.mean()))


def excess_risk(
    predictor: SelectivePredictor,
    model: SyntheticModel,
    oracle: OracleRule,
    mc_size: int = 2000,
    seed: int = 0,
) -> float:
    return excess_risk_terms(predictor, model, oracle, mc_size, seed).total


class EstimationError(NamedTuple):
    divergence: float
    entropy_gap: float
    wasserstein: float


def estimation_error(regressor: Regressor, model: SyntheticModel, mc_size: int = 200, seed: int = 0) -> EstimationError:
    """Average ``Div``, ``|Ent - Ent*|`` and ``W1`` between predicted and true laws."""
    X = model.sample_features(mc_size, seed)
    div, gap, w1 = [], [], []
    for x, pred in zip(X, regressor.predict_batch(X)):
        truth = model.true_distribution(x)
        div.append(divergence(pred, truth))
        gap.append(abs(entropy(pred) - entropy(truth)))
        w1.append(wasserstein1(pred, truth))
    return EstimationError(float(np.mean(div)), float(np.mean(gap)), float(np.mean(w1)))


# --- Finite models and exhaustive search ---

@dataclass(frozen=True, eq=False)
class FiniteModel:
    """Discrete feature law: point ``i`` has mass ``masses[i]``, true entropy
    ``entropies[i]`` and predictor divergence ``divergences[i]``."""

    entropies: np.ndarray
    masses: np.ndarray
    divergences: np.ndarray = field(default=None)

    def __post_init__(self):
        entropies = np.asarray(self.entropies, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        divergences = (
            np.zeros_like(entropies) if self.divergences is None
            else np.asarray(self.divergences, dtype=float)
        )
        if not (entropies.ndim == 1 and entropies.shape == masses.shape == divergences.shape):
            raise ValueError("entropies, masses and divergences must be equal-length vectors")
        if entropies.size == 0:
            raise ValueError("finite model has no support points")
        if np.any(entropies < 0) or np.any(masses < 0) or np.any(divergences < 0):
            raise ValueError("entropies, masses and divergences must be nonnegative")
        if abs(masses.sum() - 1.0) > 1e-9:
            raise ValueError(f"masses must sum to 1, got {masses.sum()}")
        object.__setattr__(self, "entropies", entropies)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "divergences", divergences)

    @property
    def size(self) -> int:
        return int(self.entropies.size)

    def risk(self, accept: np.ndarray, lam: float) -> float:
        """``R_lambda = sum_accepted m (Div + Ent - lambda) + lambda``."""
        cost = self.masses * (self.divergences + self.entropies - lam)
        return float(np.dot(np.asarray(accept, dtype=float), cost) + lam)


class BruteForceResult(NamedTuple):
    accept: np.ndarray
    risk: float


def _mask_bits(masks: np.ndarray, size: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(size)) & 1).astype(np.int8)


def brute_force_optimal(fm: FiniteModel, lam: float, chunk: int = 1 << 16) -> BruteForceResult:
    """Minimize ``R_lambda`` over all accept sets by enumeration.

    Risks within ``TIE_TOLERANCE`` of the minimum count as ties; ties go to
    the larger accept set, then the lowest bit mask.
    """
    if fm.size > MAX_BRUTE_FORCE_SUPPORT:
        raise SupportSizeError(
            f"support of {fm.size} points exceeds {MAX_BRUTE_FORCE_SUPPORT}"
        )
    cost = fm.masses * (fm.divergences + fm.entropies - lam)
    total = 1 << fm.size
    risks = np.empty(total)
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        risks[start:start + masks.size] = _mask_bits(masks, fm.size) @ cost + lam

    candidates = np.nonzero(risks <= risks.min() + TIE_TOLERANCE)[0]
    sizes = _mask_bits(candidates, fm.size).sum(axis=1)
    best = int(candidates[np.argmax(sizes)])
    accept = _mask_bits(np.array([best]), fm.size)[0].astype(bool)
    return BruteForceResult(accept, float(risks[best]))


def rejection_mass(fm: FiniteModel, accept: np.ndarray) -> float:
    return float(fm.masses[~np.asarray(accept, dtype=bool)].sum())


def accepted_error(fm: FiniteModel, accept: np.ndarray) -> float:
    """Mass-weighted ``Div + Ent`` over accepted points; NaN if none carry mass."""
    accept = np.asarray(accept, dtype=bool)
    mass = fm.masses[accept].sum()
    if mass <= 0:
        return math.nan
    return float(np.dot(fm.masses[accept], fm.divergences[accept] + fm.entropies[accept]) / mass)
