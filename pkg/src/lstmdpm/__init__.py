"""Sequence learning for longitudinal cohort data with built-in handling
of missing values in inputs and targets."""

from .masked_data import (
    MaskedBatch,
    MaskedSequence,
    NormalizationFactors,
    compute_factors,
    validate_batch,
)
from .lstm import LstmParameters, forward, init_parameters, load_checkpoint, save_checkpoint
from .bptt import GradientSet, accumulate_gradients, backward, gradient_check, masked_loss
from .optimizer import OptimizerState, TrainConfig, momentum_step, train
from .imputation import forward_impute, mean_impute, node_means
from .evaluation import LdaModel, fit_lda, mae, multiclass_auc, pairwise_auc, posterior
from .experiments import (
    STRATEGIES,
    StrategyResult,
    compare_strategies,
    evaluate_params,
    train_strategy,
)
from .cohort import (
    CohortTable,
    Prepared,
    PreprocessConfig,
    ScalingSpec,
    SynthConfig,
    load_csv,
    preprocess,
    synthesize,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "MaskedBatch", "MaskedSequence", "NormalizationFactors",
    "compute_factors", "validate_batch",
    "LstmParameters", "forward", "init_parameters",
    "load_checkpoint", "save_checkpoint",
    "GradientSet", "accumulate_gradients", "backward",
    "gradient_check", "masked_loss",
    "OptimizerState", "TrainConfig", "momentum_step", "train",
    "forward_impute", "mean_impute", "node_means",
    "LdaModel", "fit_lda", "mae", "multiclass_auc", "pairwise_auc", "posterior",
    "STRATEGIES", "StrategyResult", "compare_strategies",
    "evaluate_params", "train_strategy",
    "CohortTable", "Prepared", "PreprocessConfig", "ScalingSpec",
    "SynthConfig", "load_csv", "preprocess", "synthesize", "write_csv",
]
