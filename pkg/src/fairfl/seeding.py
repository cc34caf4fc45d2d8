import zlib

import numpy as np


def derive_seed(base: int, *keys) -> int:
    """Deterministic 32-bit child seed for ``base`` and a path of int/str keys.

    Strings are hashed with crc32 so the derivation is stable across processes
    (``hash()`` is salted per interpreter).
    """
    path = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return int(np.random.SeedSequence(entropy=base, spawn_key=path).generate_state(1)[0])


def make_rng(base: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, *keys))
