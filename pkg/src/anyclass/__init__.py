"""Multi-label losses with an any-class presence likelihood term.

The package provides BCE and focal losses and their any-class variants
together with analytic logit gradients, class-balancing weights with a
negative category, multi-label metrics, label-dataset tooling, a small numpy
MLP trainer and a command-line interface.
"""

__version__ = "0.1.0"

from .balance import BalanceWeights, ClassCounts, count_labels, effective_weights
from .data import (LabelDataset, SplitSpec, SyntheticConfig, co_occurrence, dataset_stats,
                   filter_classes, load_dataset, save_dataset, split_dataset, synthesize)
from .errors import (AnyClassError, InvalidConfigError, InvalidInputError, ParseError,
                     TrainingDivergedError, UndefinedMetricError, ZeroCountError)
from .losses import (LossConfig, LossResult, any_bce_loss, any_class_logit, any_class_target,
                     any_focal_loss, apply_class_balance, bce_loss, compute_loss, focal_loss,
                     likelihood_surface_grid)
from .metrics import (MetricsReport, average_precision, f1_negative, f2_ciw, fbeta_per_class,
                      full_report, threshold_predictions)
from .numerics import log_sigmoid, softplus, stable_sigmoid
from .trainer import (MLP, MLPConfig, TrainConfig, TrainingLog, ablate_lambda, evaluate,
                      init_model, train)

__all__ = [
    "BalanceWeights", "ClassCounts", "count_labels", "effective_weights",
    "LabelDataset", "SplitSpec", "SyntheticConfig", "co_occurrence", "dataset_stats",
    "filter_classes", "load_dataset", "save_dataset", "split_dataset", "synthesize",
    "AnyClassError", "InvalidConfigError", "InvalidInputError", "ParseError",
    "TrainingDivergedError", "UndefinedMetricError", "ZeroCountError",
    "LossConfig", "LossResult", "any_bce_loss", "any_class_logit", "any_class_target",
    "any_focal_loss", "apply_class_balance", "bce_loss", "compute_loss", "focal_loss",
    "likelihood_surface_grid",
    "MetricsReport", "average_precision", "f1_negative", "f2_ciw", "fbeta_per_class",
    "full_report", "threshold_predictions",
    "log_sigmoid", "softplus", "stable_sigmoid",
    "MLP", "MLPConfig", "TrainConfig", "TrainingLog", "ablate_lambda", "evaluate",
    "init_model", "train",
]
