"""Experiment harness: repeated splits, epsilon and lambda sweeps, studies.

Every repetition derives its own seed from the base seed, so a sweep is
reproducible and its repetitions can run in any order or in parallel.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .backends import (
    DatasetError,
    LabeledDataset,
    Regressor,
    forest_fit,
    knn_fit,
    rule_of_thumb_k,
    select_k,
    select_mtry,
)
from .config import ExperimentConfig
from .data_io import load_csv, split, standardize_apply, standardize_dataset, standardize_fit
from .scoring import crps, entropy
from .selective import DEFAULT_JITTER, CalibrationTable, EpsilonPolicy, EpsilonPredictor, SelectivePredictor, entropy_scores
from .synthetic import OraclePredictor, SyntheticModel, excess_risk, make_model, oracle_lambda
from .utils import derive_seed

logger = logging.getLogger(__name__)

# Stream indices mixed into a repetition seed.
STREAM_DATA = 0
STREAM_SELECT = 1
STREAM_FOREST = 2
STREAM_CALIBRATION = 3
STREAM_ORACLE = 4


class EvaluationResult(NamedTuple):
    err: Optional[float]
    reject_rate: float


def _summarize(scores: np.ndarray, accept: np.ndarray) -> EvaluationResult:
    accept = np.asarray(accept, dtype=bool)
    reject_rate = 1.0 - accept.sum() / accept.size
    err = float(scores[accept].mean()) if accept.any() else None
    return EvaluationResult(err, float(reject_rate))


def evaluate(predictor: SelectivePredictor, test: LabeledDataset) -> EvaluationResult:
    """Rejection rate and mean CRPS over the accepted test points.

    ``err`` is ``None`` when every test point is rejected.
    """
    predictions = predictor.predict_batch(test.features)
    accept = np.array([p.accepted for p in predictions])
    scores = np.array([
        crps(p.distribution, y) if p.accepted else math.nan
        for p, y in zip(predictions, test.targets)
    ])
    return _summarize(scores, accept)


def empirical_risk(result: EvaluationResult, lam: float) -> float:
    """Plug-in ``Err * (1 - r) + lambda * r``."""
    if result.err is None:
        return lam
    return result.err * (1.0 - result.reject_rate) + lam * result.reject_rate


# --- Sweeps ---

@dataclass(frozen=True, eq=False)
class SweepResult:
    """Per-grid-value mean and sample std of ``Err`` and ``r`` over repetitions.

    ``values`` holds the raw ``(repetitions, grid, 2)`` array of
    ``(err, reject_rate)``, NaN marking an undefined error.
    """

    grid_name: str
    grid: Tuple[float, ...]
    values: np.ndarray

    @property
    def repetitions(self) -> int:
        return int(self.values.shape[0])

    def _column(self, which: int) -> Tuple[np.ndarray, np.ndarray]:
        stats = [_mean_std(self.values[:, j, which]) for j in range(len(self.grid))]
        return np.array([s[0] for s in stats]), np.array([s[1] for s in stats])

    @property
    def err_mean(self) -> np.ndarray:
        return self._column(0)[0]

    @property
    def err_std(self) -> np.ndarray:
        return self._column(0)[1]

    @property
    def rej_mean(self) -> np.ndarray:
        return self._column(1)[0]

    @property
    def rej_std(self) -> np.ndarray:
        return self._column(1)[1]

    def to_frame(self) -> pd.DataFrame:
        err_mean, err_std = self._column(0)
        rej_mean, rej_std = self._column(1)
        return pd.DataFrame({
            self.grid_name: list(self.grid),
            "err_mean": err_mean,
            "err_std": err_std,
            "rej_mean": rej_mean,
            "rej_std": rej_std,
        })


def _mean_std(values: np.ndarray) -> Tuple[float, float]:
    finite = values[~np.isnan(values)]
    mean = float(finite.mean()) if finite.size else math.nan
    std = float(finite.std(ddof=1)) if finite.size > 1 else math.nan
    return mean, std


def format_table(result: SweepResult, digits: int = 3) -> str:
    """Render a sweep as ``mean (std)`` cells."""
    def cell(mean, std):
        if math.isnan(mean):
            return "-"
        if math.isnan(std):
            return f"{mean:.{digits}f}"
        return f"{mean:.{digits}f} ({std:.{digits}f})"

    frame = pd.DataFrame({
        result.grid_name: [f"{g:g}" for g in result.grid],
        "err": [cell(m, s) for m, s in zip(result.err_mean, result.err_std)],
        "rej": [cell(m, s) for m, s in zip(result.rej_mean, result.rej_std)],
    })
    return frame.to_string(index=False)


def _load_source(config: ExperimentConfig):
    if config.data_path is not None:
        return load_csv(config.data_path, config.target)
    return make_model(config.synthetic.model, config.synthetic.params)


def _draw_splits(config: ExperimentConfig, source, seed: int):
    data_seed = derive_seed(seed, STREAM_DATA)
    if isinstance(source, SyntheticModel):
        sizes = config.synthetic.sizes
        if sizes is not None:
            n_labeled, n_unlabeled, n_test = sizes
            data = source.sample(n_labeled + n_unlabeled + n_test, data_seed)
            labeled = data.subset(slice(0, n_labeled))
            unlabeled = data.features[n_labeled:n_labeled + n_unlabeled]
            test = data.subset(slice(n_labeled + n_unlabeled, None))
            return labeled, unlabeled, test
        source = source.sample(config.synthetic.n, data_seed)
    spec = config.split.model_copy(update={"seed": data_seed})
    return split(source, spec)


def _fit_backend(config: ExperimentConfig, labeled: LabeledDataset, seed: int, jobs: int) -> Regressor:
    select_seed = derive_seed(seed, STREAM_SELECT)
    if config.backend == "knn":
        k = config.k
        if k is None:
            grid = [v for v in config.k_grid if v <= labeled.n]
            if not grid:
                raise DatasetError(f"every k in {config.k_grid} exceeds the {labeled.n} labeled rows")
            k = select_k(labeled, grid, config.val_fraction, select_seed)
        if k > labeled.n:
            raise DatasetError(f"k={k} exceeds the {labeled.n} labeled rows")
        return knn_fit(labeled, k)

    params = config.forest.model_copy(update={"seed": derive_seed(seed, STREAM_FOREST)})
    if params.mtry is None and config.mtry_grid is not None:
        grid = [m for m in config.mtry_grid if m <= labeled.d]
        if not grid:
            raise DatasetError(f"every mtry in {config.mtry_grid} exceeds the {labeled.d} features")
        mtry = select_mtry(labeled, grid, params, config.val_fraction, select_seed)
        params = params.model_copy(update={"mtry": mtry})
    return forest_fit(labeled, params, jobs=jobs)


@dataclass(frozen=True, eq=False)
class _Repetition:
    """Fitted pipeline of one repetition, scored once on its test split."""

    table: CalibrationTable
    test_entropies: np.ndarray
    test_crps: np.ndarray


def _prepare_repetition(config: ExperimentConfig, source, rep: int, jobs: int) -> _Repetition:
    seed = derive_seed(config.seed, rep)
    labeled, unlabeled, test = _draw_splits(config, source, seed)
    if config.use_standardization:
        scaler = standardize_fit(labeled)
        labeled = standardize_dataset(scaler, labeled)
        unlabeled = standardize_apply(scaler, unlabeled)
        test = standardize_dataset(scaler, test)
    regressor = _fit_backend(config, labeled, seed, jobs)
    table = entropy_scores(regressor, unlabeled, config.jitter, derive_seed(seed, STREAM_CALIBRATION))
    dists = regressor.predict_batch(test.features)
    return _Repetition(
        table=table,
        test_entropies=np.array([entropy(d) for d in dists]),
        test_crps=np.array([crps(d, y) for d, y in zip(dists, test.targets)]),
    )


def _epsilon_repetition(config: ExperimentConfig, source, rep: int, jobs: int) -> np.ndarray:
    logger.info("repetition %d: start", rep)
    prepared = _prepare_repetition(config, source, rep, jobs)
    out = np.empty((len(config.epsilons), 2))
    for j, eps in enumerate(config.epsilons):
        # every epsilon draws the same query jitter from a fresh policy
        policy = EpsilonPolicy(eps, prepared.table)
        scores = prepared.test_entropies + policy.draw_jitter(prepared.test_entropies.size)
        result = _summarize(prepared.test_crps, policy.accepts(scores))
        out[j] = (math.nan if result.err is None else result.err, result.reject_rate)
    logger.info("repetition %d: done", rep)
    return out


def _lambda_repetition(config: ExperimentConfig, source, rep: int, lambdas, jobs: int) -> np.ndarray:
    logger.info("repetition %d: start", rep)
    prepared = _prepare_repetition(config, source, rep, jobs)
    out = np.empty((len(lambdas), 2))
    for j, lam in enumerate(lambdas):
        result = _summarize(prepared.test_crps, prepared.test_entropies <= lam)
        out[j] = (math.nan if result.err is None else result.err, result.reject_rate)
    logger.info("repetition %d: done", rep)
    return out


def _run_repetitions(worker, config: ExperimentConfig, jobs: int, *args) -> np.ndarray:
    source = _load_source(config)
    if jobs > 1 and config.repetitions > 1:
        # trees are grown serially inside parallel repetitions
        rows = Parallel(n_jobs=jobs)(
            delayed(worker)(config, source, rep, *args, 1) for rep in range(config.repetitions)
        )
    else:
        rows = [worker(config, source, rep, *args, jobs) for rep in range(config.repetitions)]
    return np.stack(rows)


def run_sweep(config: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """Epsilon sweep over ``config.epsilons`` with ``config.repetitions`` splits."""
    values = _run_repetitions(_epsilon_repetition, config, jobs)
    return SweepResult("epsilon", tuple(config.epsilons), values)


def run_lambda_sweep(config: ExperimentConfig, lambdas: Sequence[float], jobs: int = 1) -> SweepResult:
    """Fixed-threshold sweep: accept iff the predicted entropy is at most lambda."""
    lambdas = tuple(float(lam) for lam in lambdas)
    if not lambdas or any(not lam >= 0 for lam in lambdas):
        raise ValueError(f"lambda grid must be nonempty and nonnegative, got {lambdas}")
    values = _run_repetitions(_lambda_repetition, config, jobs, lambdas)
    return SweepResult("lambda", lambdas, values)


# --- Studies on synthetic models ---

def _convergence_run(
    model: SyntheticModel,
    n: int,
    unlabeled_size: int,
    epsilon: float,
    seed: int,
    k: Optional[int],
    jitter: float,
    mc_size: int,
    oracle_predictor: bool,
) -> Tuple[int, float]:
    rule = oracle_lambda(model, epsilon)
    risk_seed = derive_seed(seed, STREAM_ORACLE)
    if oracle_predictor:
        return 0, excess_risk(OraclePredictor.from_rule(model, rule), model, rule, mc_size, risk_seed)
    labeled = model.sample(n, derive_seed(seed, STREAM_DATA))
    unlabeled = model.sample_features(unlabeled_size, derive_seed(seed, STREAM_SELECT))
    if k is None:
        k = rule_of_thumb_k(n, model.d)
    regressor = knn_fit(labeled, min(k, n))
    table = entropy_scores(regressor, unlabeled, jitter, derive_seed(seed, STREAM_CALIBRATION))
    predictor = EpsilonPredictor(regressor, EpsilonPolicy(epsilon, table))
    return regressor.k, excess_risk(predictor, model, rule, mc_size, risk_seed)


def convergence_study(
    model: SyntheticModel,
    n_grid: Sequence[int] = (200, 800, 3200),
    unlabeled_size: int = 1000,
    epsilon: float = 0.5,
    repetitions: int = 20,
    seed: int = 0,
    k: Optional[int] = None,
    jitter: float = DEFAULT_JITTER,
    mc_size: int = 2000,
    oracle: bool = False,
    jobs: int = 1,
) -> pd.DataFrame:
    """Median excess risk of the epsilon predictor for each labeled size ``n``.

    ``k`` defaults to ``round(n ** (2 / (2 + d)))``; ``oracle=True`` scores
    the oracle predictor instead.
    """
    tasks = [
        (n, rep, derive_seed(seed, n, rep))
        for n in n_grid for rep in range(repetitions)
    ]
    results = Parallel(n_jobs=jobs)(
        delayed(_convergence_run)(model, n, unlabeled_size, epsilon, s, k, jitter, mc_size, oracle)
        for n, _, s in tasks
    )
    rows = []
    for i, n in enumerate(n_grid):
        chunk = results[i * repetitions:(i + 1) * repetitions]
        risks = np.array([r for _, r in chunk])
        rows.append({
            "n": n,
            "k": chunk[0][0],
            "excess_median": float(np.median(risks)),
            "excess_mean": float(risks.mean()),
        })
        logger.info("n=%d: median excess risk %.6g", n, rows[-1]["excess_median"])
    return pd.DataFrame(rows)


def _calibration_run(
    model: SyntheticModel,
    n: int,
    unlabeled_size: int,
    epsilons: Sequence[float],
    seed: int,
    test_size: int,
    jitter: float,
) -> List[float]:
    labeled = model.sample(n, derive_seed(seed, STREAM_DATA))
    unlabeled = model.sample_features(unlabeled_size, derive_seed(seed, STREAM_SELECT))
    test = model.sample_features(test_size, derive_seed(seed, STREAM_ORACLE))
    regressor = knn_fit(labeled, min(rule_of_thumb_k(n, model.d), n))
    table = entropy_scores(regressor, unlabeled, jitter, derive_seed(seed, STREAM_CALIBRATION))
    entropies = np.array([entropy(d) for d in regressor.predict_batch(test)])
    deviations = []
    for eps in epsilons:
        policy = EpsilonPolicy(eps, table)
        accept = policy.accepts(entropies + policy.draw_jitter(entropies.size))
        deviations.append(abs(1.0 - accept.mean() - eps))
    return deviations


class CalibrationStudy(NamedTuple):
    frame: pd.DataFrame
    slope: float


def calibration_study(
    model: SyntheticModel,
    n: int = 1000,
    unlabeled_grid: Sequence[int] = (125, 500, 2000),
    epsilons: Sequence[float] = tuple(i / 10 for i in range(1, 10)),
    repetitions: int = 50,
    seed: int = 0,
    test_size: int = 10_000,
    jitter: float = DEFAULT_JITTER,
    jobs: int = 1,
) -> CalibrationStudy:
    """Mean ``|r - epsilon|`` per unlabeled size ``N`` and its log-log slope in ``N``."""
    if len(unlabeled_grid) < 2:
        raise ValueError("the slope needs at least two unlabeled sizes")
    results = Parallel(n_jobs=jobs)(
        delayed(_calibration_run)(model, n, size, epsilons, derive_seed(seed, size, rep), test_size, jitter)
        for size in unlabeled_grid for rep in range(repetitions)
    )
    rows = []
    for i, size in enumerate(unlabeled_grid):
        block = np.array(results[i * repetitions:(i + 1) * repetitions])
        rows.append({
            "unlabeled": size,
            "deviation": float(block.mean()),
            "deviation_max_eps": float(block.mean(axis=0).max()),
        })
    frame = pd.DataFrame(rows)
    slope = float(np.polyfit(np.log(frame["unlabeled"]), np.log(frame["deviation"]), 1)[0])
    logger.info("calibration slope %.3f over N=%s", slope, list(unlabeled_grid))
    return CalibrationStudy(frame, slope)
