"""quantloss: log-cosh loss family, asymmetric hyperbolic-secant distribution,
Lipschitz-adaptive learning rates, and L-BFGS training for small MLPs."""

from .classify import (
    MultiQuantileModel,
    QuantileCurve,
    SBQCSpec,
    multi_quantile_train,
    predict_prob,
    quantile_curve,
    sbqc_loss,
)
from .data import Dataset, FoldPlan, load_csv, standardize_apply, standardize_fit, stratified_kfold
from .losses import (
    LossEval,
    LossKind,
    LossSpec,
    batch_loss,
    eval_loss,
    log_cosh,
    quantile_crossing_penalty,
    tilted_log_cosh,
)
from .metrics import ClassificationMetrics, ConfusionMatrix, classification_metrics, rmse
from .network import (
    ForwardTrace,
    LayerSpec,
    MLPModel,
    backward,
    flatten_params,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    unflatten_params,
)
from .optim import (
    AdamState,
    LBFGSMemory,
    LipschitzContext,
    adam_step,
    lalr_lr,
    lbfgs_direction,
    lbfgs_step,
    minimize_lbfgs,
    regression_lipschitz_constant,
    sbqc_lipschitz_constant,
)
from .secant_dist import AsymmetricHSD
from .trainer import OptimizerSpec, RunReport, TrainConfig, epochs_to_threshold, train

__version__ = "0.1.0"

__all__ = [
    "AsymmetricHSD",
    "AdamState",
    "ClassificationMetrics",
    "ConfusionMatrix",
    "Dataset",
    "FoldPlan",
    "ForwardTrace",
    "LBFGSMemory",
    "LayerSpec",
    "LipschitzContext",
    "LossEval",
    "LossKind",
    "LossSpec",
    "MLPModel",
    "MultiQuantileModel",
    "OptimizerSpec",
    "QuantileCurve",
    "RunReport",
    "SBQCSpec",
    "TrainConfig",
    "adam_step",
    "backward",
    "batch_loss",
    "classification_metrics",
    "epochs_to_threshold",
    "eval_loss",
    "flatten_params",
    "forward",
    "init_model",
    "lalr_lr",
    "lbfgs_direction",
    "lbfgs_step",
    "load_checkpoint",
    "load_csv",
    "log_cosh",
    "minimize_lbfgs",
    "multi_quantile_train",
    "predict_prob",
    "quantile_crossing_penalty",
    "quantile_curve",
    "regression_lipschitz_constant",
    "rmse",
    "save_checkpoint",
    "sbqc_lipschitz_constant",
    "sbqc_loss",
    "standardize_apply",
    "standardize_fit",
    "stratified_kfold",
    "tilted_log_cosh",
    "train",
    "unflatten_params",
]
