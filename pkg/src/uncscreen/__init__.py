"""Uncertainty-guided multi-stream screening toolkit.

Models label uncertainty from multi-grader votes, trains a three-stream
classifier (uncertainty regressor, simple-case and hard-case classifiers)
with uncertainty-aware losses on a small self-contained autodiff engine,
and routes inference through an uncertainty-adaptive decision threshold.
"""

from .autodiff import Tensor
from .config import Config, derive_seed, load_config
from .datagen import GeneratorSpec, GraderPanel, build_panel, generate_dataset, simulate_votes
from .dataset import SampleRecord, Split, read_dataset, write_dataset
from .errors import DataError
from .gradcheck import GradCheckResult, run_default_checks
from .labeling import (
    Assignment,
    CasePartition,
    EmpiricalDistribution,
    GraderVotes,
    MajorityLabel,
    UncertaintyScore,
    empirical_distribution,
    majority_label,
    partition_case,
    uncertainty_score,
    variability_encoding,
)
from .losses import (
    Hyperparams,
    adaptive_threshold,
    cross_entropy,
    feature_decoupling_loss,
    joint_loss,
    mse_loss,
    normalized_uncertainty,
    pearson_distance,
    uncertainty_focal_loss,
)
from .metrics import (
    ConfusionCounts,
    Group,
    accuracy,
    auc,
    bucket_accuracy,
    f1_per_class,
    roc_curve,
    sensitivity_specificity,
)
from .nn import BackboneSpec, ParamStore, forward, init_params, load_weights, save_weights
from .optim import Adam
from .streams import (
    AblationLevel,
    Route,
    ScreeningDecision,
    StreamBundle,
    TrainConfig,
    infer,
    infer_batch,
    load_bundle,
    run_ablation,
    save_bundle,
    train_bundle,
)

__version__ = "0.1.0"

__all__ = [
    "AblationLevel",
    "Adam",
    "Assignment",
    "BackboneSpec",
    "CasePartition",
    "Config",
    "ConfusionCounts",
    "DataError",
    "EmpiricalDistribution",
    "GeneratorSpec",
    "GradCheckResult",
    "GraderPanel",
    "GraderVotes",
    "Group",
    "Hyperparams",
    "MajorityLabel",
    "ParamStore",
    "Route",
    "SampleRecord",
    "ScreeningDecision",
    "Split",
    "StreamBundle",
    "Tensor",
    "TrainConfig",
    "UncertaintyScore",
    "accuracy",
    "adaptive_threshold",
    "auc",
    "bucket_accuracy",
    "build_panel",
    "cross_entropy",
    "derive_seed",
    "empirical_distribution",
    "f1_per_class",
    "feature_decoupling_loss",
    "forward",
    "generate_dataset",
    "infer",
    "infer_batch",
    "init_params",
    "joint_loss",
    "load_bundle",
    "load_config",
    "load_weights",
    "majority_label",
    "mse_loss",
    "normalized_uncertainty",
    "partition_case",
    "pearson_distance",
    "read_dataset",
    "roc_curve",
    "run_ablation",
    "run_default_checks",
    "save_bundle",
    "save_weights",
    "sensitivity_specificity",
    "simulate_votes",
    "train_bundle",
    "uncertainty_focal_loss",
    "uncertainty_score",
    "variability_encoding",
    "write_dataset",
]
