"""Named, splittable random streams on top of numpy's counter-based Philox."""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key: object) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


class Streams:
    """A node in a tree of independent random streams.

    ``child("round", 3)`` and ``generator("labels")`` derive substreams from
    the path of keys, so a subroutine's draws do not depend on how many
    numbers its siblings consumed.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = path

    def child(self, *keys: object) -> "Streams":
        return Streams(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    def generator(self, *keys: object) -> np.random.Generator:
        node = self.child(*keys)
        seq = np.random.SeedSequence(entropy=node.seed, spawn_key=node.path)
        return np.random.Generator(np.random.Philox(seq))


def as_streams(seed_or_streams: int | Streams) -> Streams:
    if isinstance(seed_or_streams, Streams):
        return seed_or_streams
    return Streams(int(seed_or_streams))


def categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of a (n, K) probability matrix."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)
