__version__ = "0.1.0"

from .backends import ForestRegressor, KNNRegressor, LabeledDataset, forest_fit, knn_fit, select_k
from .distributions import GaussianPredictive, WeightedEmpirical, from_weighted_sample
from .scoring import crps, divergence, entropy, wasserstein1
from .selective import EpsilonPredictor, LambdaPredictor, calibrate
