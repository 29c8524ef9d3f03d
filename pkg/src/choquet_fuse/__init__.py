"""Adaptive Choquet-integral fusion of classifier outputs for imbalanced credit scoring."""
from .adaptive import (AdaptiveConfig, ConfusionMatrix, DensityTable, PairwiseJointTable,
                       ProbabilityMatrix, adapt_densities, build_confusion, build_pairwise_tables,
                       delta_factor, gamma_factor, initial_densities, row_normalize)
from .data import (Dataset, ExternalPredictions, PrepConfig, generate_synthetic, load_csv,
                   load_external_predictions, random_undersample)
from .evaluation import (CVResult, EvalReport, GridSearchResult, PipelineConfig, auc,
                         cross_validate, g_mean, grid_search_weights, stratified_folds)
from .fusion import (FusionModel, FusionOutcome, fuse_dataset, fuse_sample, majority_vote,
                     owa_fuse)
from .learners import (fit_adaboost, fit_gradient_boosting, fit_logistic, predict_supports)
from .measure import LambdaMeasure, choquet_integral, solve_lambda, subset_worth

__version__ = "0.1.0"
