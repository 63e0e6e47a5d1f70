from distreject import GaussianPredictive, calibrate, crps, entropy, from_weighted_sample, knn_fit
from distreject.config import ExperimentConfig, SyntheticSource
from distreject.evaluation import evaluate, format_table, run_sweep
from distreject.synthetic import make_model


def main():
    # 1. Scoring single predictive laws
    print("--- CRPS and entropy ---")
    coin = from_weighted_sample([0.0, 1.0], [0.5, 0.5])
    print(f"coin at y=0:     crps={crps(coin, 0.0):.6f}  entropy={entropy(coin):.6f}")
    normal = GaussianPredictive(0.0, 1.0)
    print(f"N(0,1) at y=0:   crps={crps(normal, 0.0):.6f}  entropy={entropy(normal):.6f}")

    # 2. One k-NN predictor calibrated to reject 30% of queries
    print("\n--- Calibrated k-NN predictor (epsilon=0.3) ---")
    model = make_model("sigma-linear")
    labeled = model.sample(1000, seed=1)
    unlabeled = model.sample_features(500, seed=2)
    test = model.sample(2000, seed=3)
    predictor = calibrate(knn_fit(labeled, k=30), unlabeled, epsilon=0.3, seed=4)
    result = evaluate(predictor, test)
    print(f"accepted error={result.err:.4f}  rejection rate={result.reject_rate:.3f}")

    # 3. A small epsilon sweep
    print("\n--- Epsilon sweep (5 repetitions) ---")
    config = ExperimentConfig(
        synthetic=SyntheticSource(model="sigma-linear", sizes=(500, 300, 1000)),
        k=30,
        epsilons=(0.0, 0.2, 0.4, 0.6, 0.8),
        repetitions=5,
        seed=0,
    )
    print(format_table(run_sweep(config)))


if __name__ == "__main__":
    main()
