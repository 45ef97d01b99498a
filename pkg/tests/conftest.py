import numpy as np
import pytest

from lstmdpm.lstm import LstmParameters, init_parameters
from lstmdpm.masked_data import MaskedBatch, make_batch


def random_batch(seed, big_j=4, big_t=5, n=3, m=3, missing_rate=0.3,
                 target_missing_rate=None) -> MaskedBatch:
    """Random masked batch; every subject keeps at least one input cell."""
    if target_missing_rate is None:
        target_missing_rate = missing_rate
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(-1, 1, (big_j, big_t, n))
    targets = rng.uniform(-1, 1, (big_j, big_t, m))
    input_masks = rng.random((big_j, big_t, n)) >= missing_rate
    target_masks = rng.random((big_j, big_t, m)) >= target_missing_rate
    for j in range(big_j):
        if not input_masks[j].any():
            input_masks[j, 0, 0] = True
    return make_batch(
        [f"s{j}" for j in range(big_j)], inputs, input_masks, targets, target_masks
    )


def random_params(seed, n=3, m=3, scale=0.05) -> LstmParameters:
    return init_parameters(n, m, seed=seed, scale=scale)


@pytest.fixture
def small_batch() -> MaskedBatch:
    return random_batch(seed=0)
