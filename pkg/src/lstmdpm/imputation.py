"""Baseline missing-data strategies: mean imputation and forward fill.

Both fill every masked cell and return batches with fully-true masks, so
the availability factors collapse to their complete-data constants and
training reduces to a standard LSTM.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .errors import DataError
from .masked_data import MaskedBatch, MaskedSequence


def node_means(batch: MaskedBatch) -> Tuple[np.ndarray, np.ndarray]:
    """Per-node means over available cells of a (training) batch.

    Returns (input means (N,), target means (M,)).  A node with zero
    available cells has no definable mean and is an error.
    """
    input_means = _masked_mean(batch.inputs(), batch.input_masks(), "input")
    target_means = _masked_mean(batch.targets(), batch.target_masks(), "target")
    return input_means, target_means


def _masked_mean(values: np.ndarray, masks: np.ndarray, kind: str) -> np.ndarray:
    counts = masks.sum(axis=(0, 1))
    if (counts == 0).any():
        dead = np.flatnonzero(counts == 0).tolist()
        raise DataError(f"no available training cells for {kind} node(s) {dead}")
    return values.sum(axis=(0, 1)) / counts


def mean_impute(
    batch: MaskedBatch,
    input_means: np.ndarray,
    target_means: np.ndarray,
    impute_targets: bool = True,
) -> MaskedBatch:
    """Replace every masked cell by its node's training mean."""
    return MaskedBatch(
        sequences=tuple(
            _impute_sequence(seq, input_means, target_means, impute_targets, forward_fill=False)
            for seq in batch
        )
    )


def forward_impute(
    batch: MaskedBatch,
    input_means: np.ndarray,
    target_means: np.ndarray,
    impute_targets: bool = True,
) -> MaskedBatch:
    """Carry the last available value of each node forward within each
    subject; leading gaps take the node's training mean."""
    return MaskedBatch(
        sequences=tuple(
            _impute_sequence(seq, input_means, target_means, impute_targets, forward_fill=True)
            for seq in batch
        )
    )


def _impute_sequence(
    seq: MaskedSequence,
    input_means: np.ndarray,
    target_means: np.ndarray,
    impute_targets: bool,
    forward_fill: bool,
) -> MaskedSequence:
    inputs = _fill(seq.inputs, seq.input_mask, input_means, forward_fill)
    if impute_targets:
        targets = _fill(seq.targets, seq.target_mask, target_means, forward_fill)
        target_mask = np.ones_like(seq.target_mask)
    else:
        targets = seq.targets
        target_mask = seq.target_mask
    return MaskedSequence(
        subject_id=seq.subject_id,
        inputs=inputs,
        input_mask=np.ones_like(seq.input_mask),
        targets=targets,
        target_mask=target_mask,
        labels=seq.labels,
    )


def _fill(
    values: np.ndarray, mask: np.ndarray, means: np.ndarray, forward_fill: bool
) -> np.ndarray:
    if not forward_fill:
        return np.where(mask, values, means)
    filled = np.where(mask, values, np.nan)
    for n in range(values.shape[1]):
        last = means[n]
        for t in range(values.shape[0]):
            if mask[t, n]:
                last = filled[t, n]
            else:
                filled[t, n] = last
    return filled
