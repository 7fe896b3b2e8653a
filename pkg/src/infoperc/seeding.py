"""Keyed random substreams.

Every stochastic object in the package draws from a generator keyed by
``(master seed, *path)``, so results never depend on call order or on how
replicas are farmed out.
"""

from __future__ import annotations

import hashlib
import struct
import threading

import numpy as np

# path tags, kept distinct so unrelated substreams never collide
TAG_BLOCK = 1
TAG_TERMINAL = 2
TAG_REPLICA = 3
TAG_START = 4
TAG_GRAPH = 5
TAG_AUX = 6

MASK64 = (1 << 64) - 1


def zigzag(k: int) -> int:
    """Map a signed integer onto the naturals (0, -1, 1, -2, ... -> 0, 1, 2, 3, ...)."""
    return 2 * k if k >= 0 else -2 * k - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    key = tuple(zigzag(int(p)) for p in path)
    ss = np.random.SeedSequence(int(seed) & MASK64, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit child seed for ``path``; stable across runs and platforms."""
    return int(stream_key(seed, *path)[0])


def stream_key(seed: int, *path: int) -> np.ndarray:
    """128-bit Philox key for ``(seed, *path)``, via BLAKE2b."""
    raw = struct.pack(f"<Q{len(path)}q", int(seed) & MASK64, *(int(p) for p in path))
    return np.frombuffer(hashlib.blake2b(raw, digest_size=16).digest(), dtype=np.uint64).copy()


class KeyedStreams:
    """One reusable counter-based generator, re-keyed per substream.

    Re-keying a Philox generator is several times cheaper than building a
    fresh seeded generator, which matters when thousands of small blocks
    are drawn.  The generator returned by :meth:`get` is shared, so each
    stream must be consumed before the next call.
    """

    def __init__(self):
        self._bitgen = np.random.Philox(key=0)
        self._gen = np.random.Generator(self._bitgen)
        self._state = self._bitgen.state

    def get(self, seed: int, *path: int) -> np.random.Generator:
        st = self._state
        st["state"]["counter"] = np.zeros(4, dtype=np.uint64)
        st["state"]["key"] = stream_key(seed, *path)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        self._bitgen.state = st
        return self._gen


_local = threading.local()


def keyed_stream(seed: int, *path: int) -> np.random.Generator:
    """Shared per-thread generator keyed to ``(seed, *path)``; consume it before the next call."""
    streams = getattr(_local, "streams", None)
    if streams is None:
        streams = _local.streams = KeyedStreams()
    return streams.get(seed, *path)
