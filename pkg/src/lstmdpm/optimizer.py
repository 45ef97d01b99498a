"""Momentum batch gradient descent with weight decay, plus the epoch loop.

Training is pure full-batch descent: gradients are accumulated over the
whole training batch before each update, there is no shuffling, and the
epoch count is fixed (no early stopping).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .bptt import GradientSet, batch_loss_and_gradients
from .errors import DivergenceError
from .evaluation import mae
from .lstm import LstmParameters, forward, init_parameters
from .masked_data import MaskedBatch, compute_factors


@dataclass
class OptimizerState:
    """Per-array velocities and the update-rule hyperparameters."""

    velocity: Dict[str, np.ndarray]
    learning_rate: float
    weight_decay: float
    momentum: float

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")

    @classmethod
    def zeros(
        cls,
        params: LstmParameters,
        learning_rate: float,
        weight_decay: float,
        momentum: float,
    ) -> "OptimizerState":
        velocity = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}
        return cls(
            velocity=velocity,
            learning_rate=learning_rate,
            weight_decay=weight_decay,
            momentum=momentum,
        )


def momentum_step(
    params: LstmParameters, grads: GradientSet, state: OptimizerState
) -> Tuple[LstmParameters, OptimizerState]:
    """One update: v <- mu*v - alpha*(g + gamma*w); w <- w + v.

    Weight decay applies to every array, biases and peepholes included.
    Returns new parameters and state; inputs are left untouched.
    """
    new_params: Dict[str, np.ndarray] = {}
    new_velocity: Dict[str, np.ndarray] = {}
    grad_arrays = grads.arrays()
    for name, w in params.arrays().items():
        v = (
            state.momentum * state.velocity[name]
            - state.learning_rate * (grad_arrays[name] + state.weight_decay * w)
        )
        w_new = w + v
        if not np.isfinite(w_new).all():
            raise DivergenceError(f"non-finite update in {name}")
        new_velocity[name] = v
        new_params[name] = w_new
    updated = LstmParameters.from_arrays(new_params)
    return updated, OptimizerState(
        velocity=new_velocity,
        learning_rate=state.learning_rate,
        weight_decay=state.weight_decay,
        momentum=state.momentum,
    )


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults are the tuned operating point."""

    epochs: int = 1000
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0001
    init_seed: int = 0
    init_scale: float = 0.05
    eval_every: int = 50

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    val_mae: Optional[Tuple[float, ...]] = None


def train(
    train_batch: MaskedBatch,
    config: TrainConfig,
    val_batch: Optional[MaskedBatch] = None,
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    params: Optional[LstmParameters] = None,
) -> Tuple[LstmParameters, List[EpochRecord]]:
    """Run the full-batch training loop.

    The recorded loss is the normalized loss at the start of each epoch
    (before that epoch's update).  Validation MAE, when a validation
    batch is given, is computed every ``config.eval_every`` epochs in
    original units via ``inverse``.
    """
    if params is None:
        params = init_parameters(
            train_batch.n_inputs,
            train_batch.n_targets,
            seed=config.init_seed,
            scale=config.init_scale,
        )
    state = OptimizerState.zeros(
        params, config.learning_rate, config.weight_decay, config.momentum
    )
    factors = compute_factors(train_batch)
    history: List[EpochRecord] = []
    for epoch in range(config.epochs):
        try:
            loss, grads, _ = batch_loss_and_gradients(params, train_batch, factors)
        except DivergenceError as exc:
            raise DivergenceError(f"epoch {epoch}: {exc}") from exc
        val = None
        if val_batch is not None and (epoch % config.eval_every == 0 or epoch == config.epochs - 1):
            val = tuple(validation_mae(params, val_batch, inverse))
        history.append(EpochRecord(epoch=epoch, loss=float(loss.sum()), val_mae=val))
        params, state = momentum_step(params, grads, state)
    return params, history


def validation_mae(
    params: LstmParameters,
    batch: MaskedBatch,
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> np.ndarray:
    """Per-output-node MAE of the network on a masked batch."""
    outputs = forward(params, batch.inputs()).h
    return mae(outputs, batch.targets(), batch.target_masks(), inverse=inverse)


def write_history(path, history: List[EpochRecord]) -> None:
    """Plain-text log: epoch, loss, then per-node validation MAE if any."""
    lines = []
    for rec in history:
        parts = [str(rec.epoch), repr(rec.loss)]
        if rec.val_mae is not None:
            parts.extend(repr(v) for v in rec.val_mae)
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
