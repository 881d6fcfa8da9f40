from .data import Dataset, SplitError, split
from .gbdt import BoostedEnsemble, GBDTParams, train_gbdt
from .gp import GPResult, gp_optimize
from .logreg import LogisticModel, logreg_objective, train_logreg
from .metrics import Metrics, evaluate_predictions, log_loss
from .models import evaluate, fit, model_from_json, model_to_json, tune
from .studies import (
    bootstrap_importance,
    feature_importance,
    incremental_groups_study,
    selection_curve,
)

__all__ = [
    "BoostedEnsemble",
    "Dataset",
    "GBDTParams",
    "GPResult",
    "LogisticModel",
    "Metrics",
    "SplitError",
    "bootstrap_importance",
    "evaluate",
    "evaluate_predictions",
    "feature_importance",
    "fit",
    "gp_optimize",
    "incremental_groups_study",
    "log_loss",
    "logreg_objective",
    "model_from_json",
    "model_to_json",
    "selection_curve",
    "split",
    "train_gbdt",
    "train_logreg",
    "tune",
]
