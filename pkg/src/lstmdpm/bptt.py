"""Missing-data-aware loss and full-gradient backpropagation through time.

The loss over available target cells is normalized per subject by the
availability factors, input-weight gradients are rescaled per input node,
and masked cells contribute exactly zero everywhere.  A finite-difference
checker doubles as the correctness oracle for the whole chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import DivergenceError
from .lstm import (
    PARAMETER_NAMES,
    ForwardCache,
    LstmParameters,
    dsigmoid,
    dtanh,
    forward,
)
from .masked_data import MaskedBatch, NormalizationFactors, compute_factors


@dataclass(frozen=True)
class GradientSet:
    """Loss gradients, one array per parameter array (same shapes)."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    U_f: np.ndarray
    U_i: np.ndarray
    U_c: np.ndarray
    U_o: np.ndarray
    V_f: np.ndarray
    V_i: np.ndarray
    V_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMETER_NAMES}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "GradientSet":
        return cls(**{name: np.asarray(arrays[name], dtype=np.float64) for name in PARAMETER_NAMES})

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet.from_arrays({k: v * factor for k, v in self.arrays().items()})


@dataclass(frozen=True)
class BackwardState:
    """Per-timestep adjoints from one backward sweep, shapes (J, T, M)
    except ``dx`` which is (J, T, N).

    Adjoints indexed one past the last step are zero by the boundary
    convention and are not stored.
    """

    dh: np.ndarray
    do_act: np.ndarray
    do: np.ndarray
    dc_act: np.ndarray
    dc: np.ndarray
    dz_act: np.ndarray
    dz: np.ndarray
    di_act: np.ndarray
    di: np.ndarray
    df_act: np.ndarray
    df: np.ndarray
    dx: np.ndarray


def masked_loss(
    outputs: np.ndarray,
    targets: np.ndarray,
    target_mask: np.ndarray,
    factors: NormalizationFactors,
) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized L2 loss over available target cells.

    Returns the per-output-node loss (shape (M,)) and the output adjoint
    ``dy`` (shape (J, T, M)), which is exactly zero at masked cells and
    at nodes with no available targets.
    """
    mask = np.asarray(target_mask, dtype=bool)
    residual = np.where(mask, outputs - targets, 0.0)
    scale = factors.inv_loss_scale()  # (J, M)
    dy = residual * scale[:, None, :]
    loss = 0.5 * np.sum(residual * dy, axis=(0, 1))
    return loss, dy


def backward(
    params: LstmParameters, cache: ForwardCache, dy: np.ndarray
) -> BackwardState:
    """Full-gradient BPTT sweep from t = T-1 down to 0."""
    big_j, big_t, m = cache.h.shape
    if dy.shape != (big_j, big_t, m):
        raise ValueError(f"dy has shape {dy.shape}, expected {(big_j, big_t, m)}")

    shape = (big_j, big_t, m)
    dh = np.zeros(shape); do_act = np.zeros(shape); do = np.zeros(shape)
    dc_act = np.zeros(shape); dc = np.zeros(shape)
    dz_act = np.zeros(shape); dz = np.zeros(shape)
    di_act = np.zeros(shape); di = np.zeros(shape)
    df_act = np.zeros(shape); df = np.zeros(shape)
    dx = np.zeros((big_j, big_t, params.n_input))

    # Zero boundary adjoints one past the last step.
    df_next = np.zeros((big_j, m)); di_next = np.zeros((big_j, m))
    dz_next = np.zeros((big_j, m)); do_next = np.zeros((big_j, m))
    dc_next = np.zeros((big_j, m)); f_act_next = np.zeros((big_j, m))

    for t in range(big_t - 1, -1, -1):
        dh[:, t] = (
            dy[:, t]
            + df_next @ params.U_f
            + di_next @ params.U_i
            + dz_next @ params.U_c
            + do_next @ params.U_o
        )
        do_act[:, t] = dh[:, t] * cache.c_act[:, t]
        do[:, t] = do_act[:, t] * dsigmoid(cache.o[:, t])
        dc_act[:, t] = dh[:, t] * cache.o_act[:, t]
        dc[:, t] = (
            dc_act[:, t] * dtanh(cache.c[:, t])
            + dc_next * f_act_next
            + params.V_f * df_next
            + params.V_i * di_next
            + params.V_o * do[:, t]
        )
        dz_act[:, t] = dc[:, t] * cache.i_act[:, t]
        dz[:, t] = dz_act[:, t] * dtanh(cache.z[:, t])
        di_act[:, t] = dc[:, t] * cache.z_act[:, t]
        di[:, t] = di_act[:, t] * dsigmoid(cache.i[:, t])
        c_prev = cache.c[:, t - 1] if t > 0 else cache.c_init
        df_act[:, t] = dc[:, t] * c_prev
        df[:, t] = df_act[:, t] * dsigmoid(cache.f[:, t])
        dx[:, t] = (
            df[:, t] @ params.W_f
            + di[:, t] @ params.W_i
            + dz[:, t] @ params.W_c
            + do[:, t] @ params.W_o
        )
        df_next, di_next = df[:, t], di[:, t]
        dz_next, do_next = dz[:, t], do[:, t]
        dc_next, f_act_next = dc[:, t], cache.f_act[:, t]

    return BackwardState(
        dh=dh, do_act=do_act, do=do, dc_act=dc_act, dc=dc,
        dz_act=dz_act, dz=dz, di_act=di_act, di=di,
        df_act=df_act, df=df, dx=dx,
    )


def accumulate_gradients(
    cache: ForwardCache, state: BackwardState, factors: NormalizationFactors
) -> GradientSet:
    """Sum per-subject gradient contributions into one GradientSet.

    Input-weight columns are rescaled per subject by 1/beta_n; recurrent
    gradients pair adjoints at t with hidden outputs at t-1 (the zero
    initial state contributes nothing at t = 0).
    """
    inv_bn = factors.inv_beta_n()  # (J, N)
    x_scaled = cache.x * inv_bn[:, None, :]
    h_prev = np.concatenate([cache.h_init[:, None, :], cache.h[:, :-1]], axis=1)
    c_prev = np.concatenate([cache.c_init[:, None, :], cache.c[:, :-1]], axis=1)

    arrays: Dict[str, np.ndarray] = {}
    for theta, d in (("f", state.df), ("i", state.di), ("c", state.dz), ("o", state.do)):
        arrays[f"W_{theta}"] = np.einsum("jtm,jtn->mn", d, x_scaled)
        arrays[f"U_{theta}"] = np.einsum("jtm,jtn->mn", d, h_prev)
        arrays[f"b_{theta}"] = d.sum(axis=(0, 1))
    # Forget/input peepholes pair the adjoint at t+1 with c at t; the
    # output peephole pairs same-step.
    arrays["V_f"] = np.sum(state.df[:, 1:] * cache.c[:, :-1], axis=(0, 1))
    arrays["V_i"] = np.sum(state.di[:, 1:] * cache.c[:, :-1], axis=(0, 1))
    arrays["V_o"] = np.sum(state.do * cache.c, axis=(0, 1))
    # The t = 0 peephole terms pair with the initial cell state.
    arrays["V_f"] = arrays["V_f"] + np.sum(state.df[:, 0] * cache.c_init, axis=0)
    arrays["V_i"] = arrays["V_i"] + np.sum(state.di[:, 0] * cache.c_init, axis=0)
    return GradientSet.from_arrays(arrays)


def batch_loss_and_gradients(
    params: LstmParameters,
    batch: MaskedBatch,
    factors: Optional[NormalizationFactors] = None,
) -> Tuple[np.ndarray, GradientSet, ForwardCache]:
    """Forward + loss + backward + accumulation over one batch."""
    if factors is None:
        factors = compute_factors(batch)
    cache = forward(params, batch.inputs())
    loss, dy = masked_loss(cache.h, batch.targets(), batch.target_masks(), factors)
    state = backward(params, cache, dy)
    grads = accumulate_gradients(cache, state, factors)
    return loss, grads, cache


def total_loss(
    params: LstmParameters,
    inputs: np.ndarray,
    targets: np.ndarray,
    target_mask: np.ndarray,
    factors: NormalizationFactors,
) -> float:
    """Scalar loss (summed over output nodes) for given raw arrays."""
    cache = forward(params, inputs)
    loss, _ = masked_loss(cache.h, targets, target_mask, factors)
    return float(loss.sum())


def subject_losses(
    params: LstmParameters,
    inputs: np.ndarray,
    targets: np.ndarray,
    target_mask: np.ndarray,
    factors: NormalizationFactors,
    dtype=np.float64,
) -> np.ndarray:
    """Per-subject scalar losses (the total loss is their sum)."""
    cache = forward(params, inputs, dtype=dtype)
    residual = np.where(target_mask, cache.h - np.asarray(targets, dtype=dtype), 0.0)
    scale = factors.inv_loss_scale()
    return 0.5 * np.sum(residual * residual * scale[:, None, :], axis=(1, 2))


@dataclass(frozen=True)
class GradcheckReport:
    """Max relative error per parameter array (plus the input gradient)."""

    max_rel_error: Dict[str, float]
    tolerance: float

    @property
    def failures(self) -> Tuple[str, ...]:
        return tuple(k for k, v in self.max_rel_error.items() if v > self.tolerance)

    @property
    def passed(self) -> bool:
        return not self.failures


def _rel_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-12)


def gradient_check(
    params: LstmParameters,
    batch: MaskedBatch,
    fd_step: float = 1e-6,
    tolerance: float = 1e-5,
    grads: Optional[GradientSet] = None,
) -> GradcheckReport:
    """Compare analytic gradients against central finite differences.

    The oracle differences the per-subject losses in extended precision
    and combines them with the same accumulation weights the training
    rule states: input-weight columns are weighted 1/beta_n per subject,
    everything else sums plainly (the input-weight rule is a weighted
    accumulation of per-subject loss gradients, not the raw batch-loss
    gradient, so a raw-loss difference would disagree wherever data is
    missing).  The input gradient dx is checked at available cells.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be > 0")
    factors = compute_factors(batch)
    inputs = batch.inputs()
    targets = batch.targets()
    target_mask = batch.target_masks()
    inv_bn = factors.inv_beta_n()  # (J, N)
    big_j = batch.batch_size

    cache = forward(params, inputs)
    loss, dy = masked_loss(cache.h, targets, target_mask, factors)
    state = backward(params, cache, dy)
    if grads is None:
        grads = accumulate_gradients(cache, state, factors)

    def losses_at(arrays: Mapping[str, np.ndarray], x: np.ndarray) -> np.ndarray:
        values = subject_losses(
            LstmParameters.from_arrays(arrays),
            x,
            targets,
            target_mask,
            factors,
            dtype=np.longdouble,
        )
        if not np.isfinite(values).all():
            raise DivergenceError("non-finite loss during finite differencing")
        return values

    errors: Dict[str, float] = {}
    base = {k: v.copy() for k, v in params.arrays().items()}
    for name in PARAMETER_NAMES:
        analytic = grads.arrays()[name].reshape(-1)
        worst = 0.0
        arr = base[name]
        flat = arr.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + fd_step
            plus = losses_at(base, inputs)
            flat[idx] = orig - fd_step
            minus = losses_at(base, inputs)
            flat[idx] = orig
            per_subject = (plus - minus) / (2.0 * fd_step)
            if name.startswith("W"):
                n = idx % arr.shape[1]
                numeric = float(per_subject @ inv_bn[:, n])
            else:
                numeric = float(per_subject.sum())
            worst = max(worst, _rel_error(float(analytic[idx]), numeric))
        errors[name] = worst

    # Input gradient, probed at available cells only; dx is the plain
    # per-subject loss gradient, so subjects sum unweighted.
    worst = 0.0
    x_work = inputs.copy()
    flat_x = x_work.reshape(-1)
    available = np.flatnonzero(batch.input_masks().reshape(-1))
    for idx in available:
        orig = flat_x[idx]
        flat_x[idx] = orig + fd_step
        plus = losses_at(base, x_work)
        flat_x[idx] = orig - fd_step
        minus = losses_at(base, x_work)
        flat_x[idx] = orig
        numeric = float((plus - minus).sum()) / (2.0 * fd_step)
        worst = max(worst, _rel_error(float(state.dx.reshape(-1)[idx]), numeric))
    errors["x"] = worst

    return GradcheckReport(max_rel_error=errors, tolerance=tolerance)
