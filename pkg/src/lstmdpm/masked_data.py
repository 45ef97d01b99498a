"""Masked multivariate sequences and the normalization factors used by the
robust training rule.

A masked sequence stores a dense value matrix together with a boolean
availability mask.  Missing cells always hold a literal 0 in the value
matrix (zero substitution happens at construction), so the forward pass
never has to branch on the mask; the mask is consulted only when counting
availability for the normalization factors, masking the loss, and
normalizing gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class MaskedSequence:
    """One subject's time series with per-cell availability masks.

    ``inputs`` has shape (T, N) and ``targets`` shape (T, M); the target
    at step t is the visit following input step t.  ``labels``, when
    present, holds one class label (or None) per target step.
    """

    subject_id: str
    inputs: np.ndarray
    input_mask: np.ndarray
    targets: np.ndarray
    target_mask: np.ndarray
    labels: Optional[Tuple[Optional[str], ...]] = None

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        input_mask = np.asarray(self.input_mask, dtype=bool)
        target_mask = np.asarray(self.target_mask, dtype=bool)
        if inputs.ndim != 2 or targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D (T x nodes)")
        if inputs.shape != input_mask.shape:
            raise ValueError("inputs and input_mask shapes differ")
        if targets.shape != target_mask.shape:
            raise ValueError("targets and target_mask shapes differ")
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs and targets must share the time axis")
        if not input_mask.any():
            raise ValueError(
                f"subject {self.subject_id!r} has no available input values"
            )
        if self.labels is not None and len(self.labels) != targets.shape[0]:
            raise ValueError("labels must hold one entry per target step")
        # Zero substitution: masked cells hold the literal sentinel 0.
        inputs = np.where(input_mask, inputs, 0.0)
        targets = np.where(target_mask, targets, 0.0)
        if not np.isfinite(inputs).all() or not np.isfinite(targets).all():
            raise ValueError("available cells must be finite")
        inputs.setflags(write=False)
        targets.setflags(write=False)
        input_mask.setflags(write=False)
        target_mask.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "input_mask", input_mask)
        object.__setattr__(self, "target_mask", target_mask)

    @property
    def n_steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[1]


@dataclass(frozen=True)
class MaskedBatch:
    """An ordered collection of dimension-compatible masked sequences."""

    sequences: Tuple[MaskedSequence, ...]

    def __post_init__(self) -> None:
        sequences = tuple(self.sequences)
        if not sequences:
            raise ValueError("a batch needs at least one sequence")
        first = sequences[0]
        for seq in sequences[1:]:
            if (
                seq.n_steps != first.n_steps
                or seq.n_inputs != first.n_inputs
                or seq.n_targets != first.n_targets
            ):
                raise ValueError(
                    f"sequence {seq.subject_id!r} is dimension-incompatible"
                )
        object.__setattr__(self, "sequences", sequences)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def batch_size(self) -> int:
        return len(self.sequences)

    @property
    def n_steps(self) -> int:
        return self.sequences[0].n_steps

    @property
    def n_inputs(self) -> int:
        return self.sequences[0].n_inputs

    @property
    def n_targets(self) -> int:
        return self.sequences[0].n_targets

    def inputs(self) -> np.ndarray:
        """Stacked input values, shape (J, T, N)."""
        return np.stack([s.inputs for s in self.sequences])

    def input_masks(self) -> np.ndarray:
        return np.stack([s.input_mask for s in self.sequences])

    def targets(self) -> np.ndarray:
        """Stacked target values, shape (J, T, M)."""
        return np.stack([s.targets for s in self.sequences])

    def target_masks(self) -> np.ndarray:
        return np.stack([s.target_mask for s in self.sequences])


@dataclass(frozen=True)
class NormalizationFactors:
    """Subject-specific availability counts driving loss/gradient scaling.

    For a subject j in a batch of size J with T steps and N input nodes:

    * ``beta_x[j]``    = J * (available input cells of j) / (T * N)
    * ``beta_m[j, m]`` = available target steps of node m
    * ``beta_n[j, n]`` = (available input steps of node n) / T

    With complete data these collapse to J, T, and 1 respectively.
    """

    beta_x: np.ndarray  # (J,)
    beta_m: np.ndarray  # (J, M)
    beta_n: np.ndarray  # (J, N)

    def __post_init__(self) -> None:
        for arr in (self.beta_x, self.beta_m, self.beta_n):
            arr.setflags(write=False)

    def inv_beta_n(self) -> np.ndarray:
        """1 / beta_n with the 0/0 limit resolved to 0 (masked columns
        contribute nothing anyway because their values are zero)."""
        return np.where(self.beta_n > 0, 1.0 / np.where(self.beta_n > 0, self.beta_n, 1.0), 0.0)

    def inv_loss_scale(self) -> np.ndarray:
        """1 / (beta_x[j] * beta_m[j, m]) as a (J, M) array, 0 where
        beta_m is 0."""
        denom = self.beta_x[:, None] * self.beta_m
        return np.where(denom > 0, 1.0 / np.where(denom > 0, denom, 1.0), 0.0)


def compute_factors(batch: MaskedBatch) -> NormalizationFactors:
    """Compute the three availability factors from the batch masks only."""
    input_masks = batch.input_masks()
    target_masks = batch.target_masks()
    big_j = batch.batch_size
    big_t = batch.n_steps
    big_n = batch.n_inputs
    beta_x = big_j * input_masks.sum(axis=(1, 2)) / float(big_t * big_n)
    beta_m = target_masks.sum(axis=1).astype(np.float64)
    beta_n = input_masks.sum(axis=1) / float(big_t)
    return NormalizationFactors(beta_x=beta_x, beta_m=beta_m, beta_n=beta_n)


def complete_factors(batch: MaskedBatch) -> NormalizationFactors:
    """Factors for a fully observed batch of the same dimensions."""
    big_j, big_t = batch.batch_size, batch.n_steps
    return NormalizationFactors(
        beta_x=np.full(big_j, float(big_j)),
        beta_m=np.full((big_j, batch.n_targets), float(big_t)),
        beta_n=np.ones((big_j, batch.n_inputs)),
    )


@dataclass(frozen=True)
class BatchReport:
    """Validation findings for a batch; purely informational."""

    dead_input_nodes: Tuple[int, ...]
    empty_subjects: Tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.dead_input_nodes and not self.empty_subjects


def validate_masks(input_masks: np.ndarray) -> BatchReport:
    """Inspect raw (J, T, N) availability masks before batch construction.

    Flags input nodes with no available value in any subject (they cannot
    contribute to weight updates) and subjects with no available inputs
    at all (which MaskedSequence would reject).
    """
    masks = np.asarray(input_masks, dtype=bool)
    if masks.ndim != 3:
        raise ValueError("input_masks must have shape (J, T, N)")
    dead_nodes = tuple(int(n) for n in np.flatnonzero(~masks.any(axis=(0, 1))))
    empty_subjects = tuple(int(j) for j in np.flatnonzero(~masks.any(axis=(1, 2))))
    return BatchReport(dead_input_nodes=dead_nodes, empty_subjects=empty_subjects)


def validate_batch(batch: MaskedBatch) -> BatchReport:
    return validate_masks(batch.input_masks())


def make_batch(
    subject_ids: Sequence[str],
    inputs: np.ndarray,
    input_masks: np.ndarray,
    targets: np.ndarray,
    target_masks: np.ndarray,
) -> MaskedBatch:
    """Build a batch from stacked (J, T, ·) arrays."""
    seqs = [
        MaskedSequence(
            subject_id=sid,
            inputs=inputs[j],
            input_mask=input_masks[j],
            targets=targets[j],
            target_mask=target_masks[j],
        )
        for j, sid in enumerate(subject_ids)
    ]
    return MaskedBatch(sequences=tuple(seqs))
