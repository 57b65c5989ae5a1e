"""Counter-based random streams.

Every consumer draws from a Philox generator keyed on ``(seed, stream)`` so that
independent parts of a run (train noise, test noise, Markov chains) never share
state and stay reproducible when run in any order.
"""

import numpy as np

STREAM_TRAIN_NOISE = 0
STREAM_TEST_X = 1
STREAM_TEST_NOISE = 2
STREAM_CHAIN = 3

_U64 = 2**64


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    if not 0 <= stream < _U64:
        raise ValueError(f"stream must be an unsigned 64-bit integer, got {stream}")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
