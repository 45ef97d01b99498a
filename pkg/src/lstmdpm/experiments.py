"""End-to-end experiment helpers shared by the CLI, the benchmark
script, and the acceptance suite: per-strategy training and evaluation
of the missing-data handling variants on a prepared cohort."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .cohort import Prepared
from .errors import ConfigError
from .evaluation import auc_report, fit_lda, mae, score_visits
from .imputation import forward_impute, mean_impute, node_means
from .lstm import LstmParameters, forward
from .masked_data import MaskedBatch
from .optimizer import EpochRecord, TrainConfig, train

STRATEGIES = ("masked", "mean", "forward")


def strategy_inputs(
    batch: MaskedBatch,
    strategy: str,
    train_batch: MaskedBatch,
    impute_targets: bool = False,
) -> MaskedBatch:
    """Apply a missing-data strategy to a batch's inputs.

    Node means always come from the training split.  Targets are only
    imputed when requested (training-time baselines); evaluation keeps
    the true masked targets.
    """
    if strategy == "masked":
        return batch
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown missing strategy {strategy!r}")
    input_means, target_means = node_means(train_batch)
    impute = mean_impute if strategy == "mean" else forward_impute
    return impute(batch, input_means, target_means, impute_targets=impute_targets)


def train_strategy(
    prepared: Prepared, strategy: str, config: TrainConfig
) -> Tuple[LstmParameters, List[EpochRecord]]:
    """Train one model under the given missing-data strategy."""
    train_batch = strategy_inputs(
        prepared.train, strategy, prepared.train, impute_targets=True
    )
    val_batch = strategy_inputs(prepared.val, strategy, prepared.train)
    return train(
        train_batch, config, val_batch=val_batch, inverse=prepared.scaling.inverse
    )


def predict(
    params: LstmParameters,
    batch: MaskedBatch,
    strategy: str,
    train_batch: MaskedBatch,
) -> np.ndarray:
    """Network outputs (J, T, M) for a batch under a strategy's inputs."""
    inputs = strategy_inputs(batch, strategy, train_batch).inputs()
    return forward(params, inputs).h


def labeled_rows(
    predictions: np.ndarray, batch: MaskedBatch
) -> Tuple[np.ndarray, List[str]]:
    """One feature row per labeled (subject, visit) pair."""
    features: List[np.ndarray] = []
    labels: List[str] = []
    for j, seq in enumerate(batch):
        if seq.labels is None:
            continue
        for t, label in enumerate(seq.labels):
            if label is not None:
                features.append(predictions[j, t])
                labels.append(label)
    if not features:
        return np.empty((0, batch.n_targets)), []
    return np.stack(features), labels


@dataclass(frozen=True)
class StrategyResult:
    """Test metrics of one trained model."""

    strategy: str
    mae_per_node: Tuple[float, ...]
    auc: Dict[str, float]

    @property
    def mean_mae(self) -> float:
        values = [v for v in self.mae_per_node if not np.isnan(v)]
        return float(np.mean(values)) if values else float("nan")

    @property
    def multiclass_auc(self) -> float:
        return self.auc["multiclass"]


def evaluate_params(
    params: LstmParameters,
    prepared: Prepared,
    split: str,
    strategy: str,
    lda_ridge: Optional[float] = None,
) -> StrategyResult:
    """Evaluate a checkpoint: per-biomarker MAE in original units, plus
    pairwise and multi-class AUC of an LDA fit on training predictions."""
    eval_batch = prepared.split(split)
    predictions = predict(params, eval_batch, strategy, prepared.train)
    node_mae = mae(
        predictions,
        eval_batch.targets(),
        eval_batch.target_masks(),
        inverse=prepared.scaling.inverse,
    )
    train_pred = predict(params, prepared.train, strategy, prepared.train)
    fit_features, fit_labels = labeled_rows(
        prepared.scaling.inverse(train_pred), prepared.train
    )
    model = fit_lda(fit_features, fit_labels, ridge=lda_ridge)
    eval_features, eval_labels = labeled_rows(
        prepared.scaling.inverse(predictions), eval_batch
    )
    scored = score_visits(model, eval_features, eval_labels)
    return StrategyResult(
        strategy=strategy,
        mae_per_node=tuple(float(v) for v in node_mae),
        auc=auc_report(scored),
    )


def compare_strategies(
    prepared: Prepared,
    config: TrainConfig,
    strategies: Tuple[str, ...] = STRATEGIES,
    split: str = "test",
    lda_ridge: Optional[float] = None,
) -> Dict[str, StrategyResult]:
    """Train and evaluate every strategy under identical budgets."""
    results: Dict[str, StrategyResult] = {}
    for strategy in strategies:
        params, _ = train_strategy(prepared, strategy, config)
        results[strategy] = evaluate_params(
            params, prepared, split, strategy, lda_ridge=lda_ridge
        )
    return results
