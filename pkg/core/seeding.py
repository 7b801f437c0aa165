import zlib

import numpy as np

RandomState = int | np.random.Generator


def _key_to_int(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode())
    if key < 0:
        raise ValueError(f'seed keys must be non-negative (got {key})')
    return key


def derive_seed(seed: int, *keys: int | str) -> int:
    """A 64-bit seed for the stream identified by `keys` under `seed`.

    Streams of sweep points, bootstrap replicas and analyzer angles are derived this way, so
    results never depend on evaluation order."""
    sequence = np.random.SeedSequence([seed, *(_key_to_int(k) for k in keys)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def as_generator(state: RandomState) -> np.random.Generator:
    if isinstance(state, np.random.Generator):
        return state
    return np.random.default_rng(state)
