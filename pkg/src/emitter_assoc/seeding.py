"""Counter-based seed derivation so every stage is a pure function of one root seed."""

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``seed`` with integer ``keys`` into an independent 64-bit seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))))


# Stream identifiers used as the first key when deriving sub-seeds.
STREAM_CHANNEL = 1
STREAM_NOISE = 2
STREAM_SPLIT = 3
STREAM_INIT = 4
STREAM_TRAIN = 5
STREAM_DRIFT = 6
STREAM_CONTROL = 7
