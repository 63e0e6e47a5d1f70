import logging
import math

import numpy as np
import pytest
from distreject.backends import knn_fit
from distreject.config import ConfigError
from distreject.synthetic import (
    FiniteModel,
    OraclePredictor,
    SupportSizeError,
    SyntheticModel,
    accepted_error,
    brute_force_optimal,
    estimation_error,
    excess_risk,
    excess_risk_terms,
    make_model,
    oracle_lambda,
    rejection_mass,
    sample,
    true_entropy,
)

SQRT_PI = math.sqrt(math.pi)

@pytest.fixture
def linear():
    return make_model("sigma-linear")

def test_sample_is_deterministic(linear):
    a, b = sample(linear, 50, seed=3), sample(linear, 50, seed=3)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.targets, b.targets)
    assert not np.array_equal(a.targets, sample(linear, 50, seed=4).targets)

def test_sample_mean_standard_normal():
    model = make_model("sigma-constant")
    n = 100_000
    assert abs(model.sample(n, seed=0).targets.mean()) <= 4 / math.sqrt(n)

def test_vanishing_sigma_returns_mean_function():
    model = SyntheticModel(mean=(1.0, 2.0), sigma_intercept=0.0, sigma_slope=0.0)
    data = model.sample(100, seed=1)
    np.testing.assert_allclose(data.targets, 1.0 + 2.0 * data.features[:, 0], atol=1e-9)

def test_true_entropy():
    assert true_entropy(make_model("sigma-constant"), np.array([0.3])) == pytest.approx(0.5641895835477563)
    rooted = SyntheticModel(sigma_intercept=SQRT_PI, sigma_slope=0.0)
    assert true_entropy(rooted, np.array([0.7])) == pytest.approx(1.0)
    assert true_entropy(make_model("sigma-linear"), np.array([0.0])) == pytest.approx(0.0, abs=1e-12)

def test_true_distribution(linear):
    g = linear.true_distribution(np.array([0.5]))
    assert (g.mean, g.stddev) == (0.0, 0.5)
    poly = make_model("heteroscedastic-poly")
    g = poly.true_distribution(np.array([0.5]))
    assert g.mean == pytest.approx(2 * 0.5 - 0.25)
    assert g.stddev == pytest.approx(0.6)

def test_make_model_overrides():
    model = make_model("sigma-linear", {"d": 3, "sigma_intercept": 0.5, "mean1": 2.0})
    assert model.d == 3
    assert model.sigma_intercept == 0.5
    assert model.mean == (0.0, 2.0)
    assert model.sample(4, seed=0).d == 3

@pytest.mark.parametrize("name, params", [
    ("no-such-model", {}),
    ("sigma-linear", {"gamma": 1.0}),
    ("sigma-linear", {"d": 1.5}),
    ("sigma-linear", {"sigma_slope": -2.0}),
])
def test_make_model_invalid(name, params):
    with pytest.raises(ConfigError):
        make_model(name, params)

def test_constant_sigma_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="distreject.synthetic"):
        make_model("sigma-constant")
    assert "constant sigma" in caplog.text

def test_oracle_lambda_closed_form(linear):
    assert oracle_lambda(linear, 0.5).lambda_eps == pytest.approx(0.2820947917738781)
    assert oracle_lambda(linear, 0.1).lambda_eps == pytest.approx(0.5077706251929807)
    constant = make_model("sigma-constant")
    for eps in (0.1, 0.5, 0.9):
        assert oracle_lambda(constant, eps).lambda_eps == pytest.approx(1 / SQRT_PI)
    decreasing = SyntheticModel(sigma_intercept=1.0, sigma_slope=-0.5)
    assert oracle_lambda(decreasing, 0.2).lambda_eps == pytest.approx(0.9 / SQRT_PI)
    with pytest.raises(ValueError):
        oracle_lambda(linear, 0.0)

def test_oracle_lambda_monte_carlo(linear):
    for eps in (0.1, 0.5, 0.8):
        exact = oracle_lambda(linear, eps).lambda_eps
        estimate = oracle_lambda(linear, eps, mc_size=100_000, seed=1, closed_form=False).lambda_eps
        assert estimate == pytest.approx(exact, abs=0.01)

def test_oracle_predictor_has_no_excess_risk(linear):
    rule = oracle_lambda(linear, 0.5)
    mc_size = 5000
    risk = excess_risk(OraclePredictor.from_rule(linear, rule), linear, rule, mc_size=mc_size, seed=2)
    assert risk <= 5 / math.sqrt(mc_size)
    assert risk == pytest.approx(0.0, abs=1e-9)

def test_never_and_always_reject_excess_risk(linear):
    # Ent = U / sqrt(pi) with U uniform: both cases give E[(U - 1/2)+] / sqrt(pi)
    rule = oracle_lambda(linear, 0.5)
    expected = 0.125 / SQRT_PI
    never = excess_risk_terms(OraclePredictor(linear, math.inf), linear, rule, mc_size=20_000, seed=3)
    assert never.divergence == pytest.approx(0.0, abs=1e-9)
    assert never.disagreement == pytest.approx(expected, abs=0.003)
    always = excess_risk_terms(OraclePredictor(linear, -math.inf), linear, rule, mc_size=20_000, seed=4)
    assert always.divergence == 0.0
    assert always.total == pytest.approx(expected, abs=0.003)

def test_estimation_error(linear):
    r = knn_fit(linear.sample(300, seed=5), 20)
    err = estimation_error(r, linear, mc_size=20, seed=6)
    assert err.divergence >= 0
    assert err.entropy_gap <= err.wasserstein + 1e-6
    assert err.divergence <= err.wasserstein + 1e-6

def test_brute_force_small_cases():
    two = FiniteModel(entropies=[0.1, 0.9], masses=[0.5, 0.5])
    assert brute_force_optimal(two, 0.5).accept.tolist() == [True, False]
    assert brute_force_optimal(two, 0.5).risk == pytest.approx(0.5 * 0.1 + 0.5 * 0.5)
    assert brute_force_optimal(two, 1.0).accept.all()
    assert not brute_force_optimal(two, 0.0).accept.any()

def test_brute_force_boundary_tie_accepts():
    fm = FiniteModel(entropies=[0.5, 0.2], masses=[0.5, 0.5])
    assert brute_force_optimal(fm, 0.5).accept.tolist() == [True, True]

def test_brute_force_support_limit():
    fm = FiniteModel(entropies=np.ones(21), masses=np.full(21, 1 / 21))
    with pytest.raises(SupportSizeError):
        brute_force_optimal(fm, 0.5)

def test_brute_force_is_thresholding():
    rng = np.random.default_rng(7)
    for _ in range(200):
        size = int(rng.integers(1, 13))
        masses = rng.uniform(0.01, 1.0, size=size)
        fm = FiniteModel(entropies=rng.uniform(size=size), masses=masses / masses.sum())
        lam = float(rng.uniform())
        result = brute_force_optimal(fm, lam)
        np.testing.assert_array_equal(result.accept, fm.entropies <= lam)
        assert result.risk == pytest.approx(fm.risk(fm.entropies <= lam, lam))

def test_rates_monotone_in_lambda():
    rng = np.random.default_rng(8)
    for _ in range(100):
        size = int(rng.integers(1, 11))
        masses = rng.uniform(0.01, 1.0, size=size)
        fm = FiniteModel(
            entropies=rng.uniform(size=size),
            masses=masses / masses.sum(),
            divergences=rng.uniform(0.0, 0.2, size=size),
        )
        lam, lam2 = np.sort(rng.uniform(0.0, 1.2, size=2))
        small, large = brute_force_optimal(fm, lam).accept, brute_force_optimal(fm, lam2).accept
        assert rejection_mass(fm, large) <= rejection_mass(fm, small) + 1e-12
        if small.any():
            assert accepted_error(fm, small) <= accepted_error(fm, large) + 1e-12

def test_accepted_error_empty_set():
    fm = FiniteModel(entropies=[0.1], masses=[1.0])
    assert math.isnan(accepted_error(fm, np.array([False])))
    assert rejection_mass(fm, np.array([False])) == 1.0

def test_finite_model_validation():
    with pytest.raises(ValueError):
        FiniteModel(entropies=[0.1, 0.2], masses=[1.0])
    with pytest.raises(ValueError):
        FiniteModel(entropies=[0.1], masses=[0.5])
    with pytest.raises(ValueError):
        FiniteModel(entropies=[-0.1], masses=[1.0])
