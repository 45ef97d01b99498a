"""Single-layer peephole LSTM: parameters, activations, forward pass,
and a bit-exact checkpoint format.

The layer has hidden width equal to the target width, and the network
output is the hidden output itself.  The forward pass caches every pre-
and post-activation so the backward pass can use full gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import DataError, DivergenceError

# Canonical array order, also the checkpoint serialization order.
PARAMETER_NAMES: Tuple[str, ...] = (
    "W_f", "W_i", "W_c", "W_o",
    "U_f", "U_i", "U_c", "U_o",
    "V_f", "V_i", "V_o",
    "b_f", "b_i", "b_c", "b_o",
)

CHECKPOINT_FORMAT = "lstm-checkpoint-1"


def sigmoid(v: np.ndarray) -> np.ndarray:
    """Logistic sigmoid, numerically stable for large |v|."""
    v = np.asarray(v)
    if v.dtype.kind != "f":
        v = v.astype(np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def dsigmoid(v: np.ndarray) -> np.ndarray:
    """Sigmoid derivative evaluated at the pre-activation."""
    s = sigmoid(v)
    return s * (1.0 - s)


def tanh_act(v: np.ndarray) -> np.ndarray:
    return np.tanh(v)


def dtanh(v: np.ndarray) -> np.ndarray:
    """tanh derivative evaluated at the pre-activation."""
    t = np.tanh(v)
    return 1.0 - t * t


@dataclass(frozen=True)
class LstmParameters:
    """All weights of one peephole LSTM layer with N inputs, M units."""

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

    def __post_init__(self) -> None:
        m, n = self.W_f.shape
        for name in PARAMETER_NAMES:
            arr = np.array(getattr(self, name), dtype=np.float64)
            expected = _expected_shape(name, n, m)
            if arr.shape != expected:
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected {expected}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_input(self) -> int:
        return self.W_f.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W_f.shape[0]

    def arrays(self) -> Dict[str, np.ndarray]:
        """Parameter arrays in canonical order."""
        return {name: getattr(self, name) for name in PARAMETER_NAMES}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "LstmParameters":
        return cls(**{name: arrays[name] for name in PARAMETER_NAMES})

    def allclose(self, other: "LstmParameters", atol: float = 0.0) -> bool:
        return all(
            np.allclose(getattr(self, n), getattr(other, n), rtol=0.0, atol=atol)
            for n in PARAMETER_NAMES
        )


def _expected_shape(name: str, n: int, m: int) -> Tuple[int, ...]:
    if name.startswith("W"):
        return (m, n)
    if name.startswith("U"):
        return (m, m)
    return (m,)


def init_parameters(
    n_input: int, n_hidden: int, seed: int, scale: float = 0.05
) -> LstmParameters:
    """Draw every entry i.i.d. uniform on [-scale, scale], deterministically."""
    if n_input < 1 or n_hidden < 1:
        raise ValueError("n_input and n_hidden must be >= 1")
    if scale < 0:
        raise ValueError("scale must be >= 0")
    rng = np.random.default_rng(seed)
    arrays = {
        name: rng.uniform(-scale, scale, _expected_shape(name, n_input, n_hidden))
        for name in PARAMETER_NAMES
    }
    return LstmParameters.from_arrays(arrays)


@dataclass(frozen=True)
class ForwardCache:
    """Everything the backward pass needs, for a whole batch.

    Pre-activation arrays (f, i, z, o) and the cell state c have shape
    (J, T, M); post-activations likewise.  ``h`` is the network output.
    """

    x: np.ndarray       # (J, T, N)
    f: np.ndarray
    i: np.ndarray
    z: np.ndarray
    o: np.ndarray
    c: np.ndarray
    f_act: np.ndarray
    i_act: np.ndarray
    z_act: np.ndarray
    c_act: np.ndarray
    o_act: np.ndarray
    h: np.ndarray
    h_init: np.ndarray  # (J, M)
    c_init: np.ndarray  # (J, M)

    @property
    def n_steps(self) -> int:
        return self.h.shape[1]


def forward(
    params: LstmParameters,
    inputs: np.ndarray,
    h_init: Optional[np.ndarray] = None,
    c_init: Optional[np.ndarray] = None,
    dtype=np.float64,
) -> ForwardCache:
    """Run the peephole recurrence over a (J, T, N) input block.

    A (T, N) input is treated as a batch of one.  Masked cells must
    already hold zero (the MaskedSequence contract).  Initial hidden and
    cell states default to zero.  ``dtype`` widens the arithmetic (the
    finite-difference oracle runs in extended precision).
    """
    x = np.asarray(inputs, dtype=dtype)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError("inputs must have shape (J, T, N) or (T, N)")
    big_j, big_t, n = x.shape
    if n != params.n_input:
        raise ValueError(f"input width {n} != parameter width {params.n_input}")
    m = params.n_hidden
    w = {name: arr.astype(dtype) for name, arr in params.arrays().items()}

    h_prev = np.zeros((big_j, m), dtype=dtype) if h_init is None else np.array(h_init, dtype=dtype)
    c_prev = np.zeros((big_j, m), dtype=dtype) if c_init is None else np.array(c_init, dtype=dtype)
    if h_prev.shape != (big_j, m) or c_prev.shape != (big_j, m):
        raise ValueError("initial states must have shape (J, M)")
    h0, c0 = h_prev.copy(), c_prev.copy()

    shape = (big_j, big_t, m)
    f = np.empty(shape, dtype=dtype); i = np.empty(shape, dtype=dtype)
    z = np.empty(shape, dtype=dtype); o = np.empty(shape, dtype=dtype)
    c = np.empty(shape, dtype=dtype)
    f_act = np.empty(shape, dtype=dtype); i_act = np.empty(shape, dtype=dtype)
    z_act = np.empty(shape, dtype=dtype); c_act = np.empty(shape, dtype=dtype)
    o_act = np.empty(shape, dtype=dtype); h = np.empty(shape, dtype=dtype)

    for t in range(big_t):
        xt = x[:, t]
        f[:, t] = xt @ w["W_f"].T + h_prev @ w["U_f"].T + w["V_f"] * c_prev + w["b_f"]
        i[:, t] = xt @ w["W_i"].T + h_prev @ w["U_i"].T + w["V_i"] * c_prev + w["b_i"]
        z[:, t] = xt @ w["W_c"].T + h_prev @ w["U_c"].T + w["b_c"]
        f_act[:, t] = sigmoid(f[:, t])
        i_act[:, t] = sigmoid(i[:, t])
        z_act[:, t] = tanh_act(z[:, t])
        c[:, t] = f_act[:, t] * c_prev + i_act[:, t] * z_act[:, t]
        c_act[:, t] = tanh_act(c[:, t])
        o[:, t] = xt @ w["W_o"].T + h_prev @ w["U_o"].T + w["V_o"] * c[:, t] + w["b_o"]
        o_act[:, t] = sigmoid(o[:, t])
        h[:, t] = o_act[:, t] * c_act[:, t]
        if not (np.isfinite(c[:, t]).all() and np.isfinite(h[:, t]).all()):
            raise DivergenceError(f"non-finite state at timestep {t}")
        h_prev = h[:, t]
        c_prev = c[:, t]

    return ForwardCache(
        x=x, f=f, i=i, z=z, o=o, c=c,
        f_act=f_act, i_act=i_act, z_act=z_act, c_act=c_act, o_act=o_act,
        h=h, h_init=h0, c_init=c0,
    )


def save_checkpoint(path, params: LstmParameters) -> None:
    """Write a versioned, bit-exact textual checkpoint."""
    lines = [CHECKPOINT_FORMAT, f"n_input {params.n_input}", f"n_hidden {params.n_hidden}"]
    for name, arr in params.arrays().items():
        flat = arr.reshape(-1)
        lines.append(f"array {name} {' '.join(str(d) for d in arr.shape)}")
        lines.append(" ".join(float(v).hex() for v in flat))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path) -> LstmParameters:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    try:
        arrays: Dict[str, np.ndarray] = {}
        idx = 3
        while idx < len(lines):
            header = lines[idx].split()
            if header[0] != "array":
                raise DataError(f"{path}: malformed array header at line {idx + 1}")
            name = header[1]
            shape = tuple(int(s) for s in header[2:])
            values = [float.fromhex(tok) for tok in lines[idx + 1].split()]
            arrays[name] = np.array(values, dtype=np.float64).reshape(shape)
            idx += 2
        if set(arrays) != set(PARAMETER_NAMES):
            raise DataError(f"{path}: checkpoint is missing parameter arrays")
        return LstmParameters.from_arrays(arrays)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed checkpoint ({exc})") from exc
