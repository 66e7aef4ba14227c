import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named stage derived from one run seed.

    Stages ("generator", "scheduler", "cv", "mc", ...) can be re-seeded
    independently while the whole run stays reproducible from ``seed``.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(key,)))
