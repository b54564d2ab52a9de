"""Multivariate conditional outlier detection.

Learns per-output-dimension conditional factors P(y_i | x, y_-i) over
datasets with real inputs and binary outputs, maps every instance to the
probabilities its observed outputs received, and ranks instances by
reliability-weighted negative log scores. Ships LOF and an
independent-factor product as baselines, plus an outlier injection
simulator and a TPAR/ATPAR evaluation harness.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DataError, DomainError, McodeError,
                     NumericalError)
from .dataset import (Dataset, PerturbationLog, RNG_ALGORITHM,
                      StandardizationStats, inject_outliers, load_csv,
                      load_log, make_rng, round_half_up, save_csv, save_log,
                      standardize)
from .optim import (ConstantFactor, DEFAULT_LAMBDA_GRID, LogisticFactor,
                    PROB_EPS, cross_validate_lambda, minimize_lbfgs,
                    penalized_nll, predict_prob, predict_prob_batch,
                    sigmoid, train_logistic)
from .model import (CvLambda, FULL_CONDITIONAL, FixedLambda, INDEPENDENT,
                    McodeModel, RhoMatrix, estimate_rho, factor_features,
                    fit_mcode, load_model, pseudo_joint, save_model)
from .scoring import (LocalWeightMatrix, NeighborIndex, ScoreVector,
                      WeightVector, brier_per_dimension, build_neighbor_index,
                      global_weights, local_weights, rank_descending,
                      score_lrw, score_prod, score_rw)
from .lof import LofConfig, lof_scores
from .evaluation import (EvalCurve, METHODS, TrialReport, atpar,
                         run_experiment, score_methods, tpar, tpar_curve)

__all__ = [name for name in dir() if not name.startswith("_")]
