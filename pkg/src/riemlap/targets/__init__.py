"""Posterior targets and data handling."""

import numpy as np

from .base import TargetModel
from .datasets import (Dataset, DatasetError, load_csv_dataset, load_logreg_dataset,
                       load_regression_1d, resolve_dataset_path, snelson_like,
                       split_complete, split_gap)
from .logistic import LogisticTarget, logistic_accel, logreg_target
from .mlp import MlpConfig, MlpTarget, mlp_accel, mlp_forward, mlp_forward_batch, mlp_target
from .synthetic import (BananaConfig, BananaTarget, FunnelTarget, GaussianTarget,
                        SquiggleTarget, banana_target, funnel_target, gaussian_target,
                        generate_banana_data, squiggle_target)


def empirical_fisher(target: TargetModel, theta) -> np.ndarray:
    """Sum of per-datum score outer products plus the prior precision."""
    scores = target.per_datum_scores(theta)
    return scores.T @ scores + target.prior_precision_matrix()


__all__ = [
    "TargetModel", "Dataset", "DatasetError", "load_csv_dataset", "load_logreg_dataset",
    "load_regression_1d", "resolve_dataset_path", "snelson_like", "split_complete",
    "split_gap", "LogisticTarget", "logistic_accel", "logreg_target", "MlpConfig",
    "MlpTarget", "mlp_accel", "mlp_forward", "mlp_forward_batch", "mlp_target",
    "BananaConfig", "BananaTarget", "FunnelTarget", "GaussianTarget", "SquiggleTarget",
    "banana_target", "funnel_target", "gaussian_target", "generate_banana_data",
    "squiggle_target", "empirical_fisher",
]
