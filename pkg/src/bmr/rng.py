"""Seeded, splittable random streams.

Every stochastic routine takes an integer seed and names its stream, so
adding a new consumer never shifts the numbers another one sees. The
generator is numpy's counter-based Philox.
"""

import zlib

import numpy as np

__all__ = ["make_rng"]


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def make_rng(seed, *stream):
    """Return a ``numpy.random.Generator`` for ``seed`` and a named sub-stream.

    >>> a = make_rng(1, "glm", "noise").standard_normal(3)
    >>> b = make_rng(1, "glm", "noise").standard_normal(3)
    >>> bool((a == b).all())
    True
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in stream))
    return np.random.Generator(np.random.Philox(ss))
