"""Counter-based, splittable uniform streams.

A draw is a pure function of ``(seed, stream, counter)``: the stream key is
``mix64(stream_hash ^ mix64(seed))`` and the output is the SplitMix64 finaliser
applied to ``key + (counter + 1) * GOLDEN``. Streams for lattice vectors are
keyed by a stable hash of their coordinates, so a sample does not depend on
the order in which vectors were enumerated or on how work was split.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0


def mix64(z) -> np.ndarray:
    """SplitMix64 output function on uint64 arrays (wrapping arithmetic)."""
    z = np.array(z, dtype=np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z ^= z >> _S30
        z *= _M1
        z ^= z >> _S27
        z *= _M2
        z ^= z >> _S31
    return z


def splitmix64(seed: int, count: int) -> np.ndarray:
    """The classic sequential SplitMix64 stream, for cross-checking."""
    state = np.uint64(seed % 2 ** 64)
    with np.errstate(over="ignore"):
        steps = (np.arange(1, count + 1, dtype=np.uint64) * GOLDEN) + state
    return mix64(steps)


def hash_vectors(vectors: np.ndarray) -> np.ndarray:
    """Stable 64-bit hash of each integer row."""
    vectors = np.asarray(vectors, dtype=np.int64)
    h = np.full(len(vectors), 0x243F6A8885A308D3, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(vectors.shape[1]):
            h = mix64(h ^ vectors[:, j].astype(np.uint64) + GOLDEN * np.uint64(j + 1))
    return h


def stream_keys(seed: int, streams: np.ndarray) -> np.ndarray:
    seed_key = mix64(np.uint64(seed % 2 ** 64) ^ np.uint64(0x6A09E667F3BCC909))
    return mix64(np.asarray(streams, dtype=np.uint64) ^ seed_key)


def raw(keys: np.ndarray, counters) -> np.ndarray:
    """uint64 outputs with shape ``(len(counters), len(keys))``."""
    counters = np.asarray(counters, dtype=np.uint64).reshape(-1, 1)
    with np.errstate(over="ignore"):
        z = keys[None, :] + (counters + np.uint64(1)) * GOLDEN
    return mix64(z)


def uniforms(keys: np.ndarray, counters) -> np.ndarray:
    """Uniforms in the open interval (0, 1), shape ``(len(counters), len(keys))``."""
    bits = raw(keys, counters) >> _S11
    return (bits.astype(np.float64) + 0.5) * _TWO53


class CounterRNG:
    """Convenience wrapper: ``CounterRNG(seed).uniform(stream, counter)``."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def keys_for(self, vectors: np.ndarray) -> np.ndarray:
        return stream_keys(self.seed, hash_vectors(vectors))

    def uniform(self, stream: int, counter: int) -> float:
        key = stream_keys(self.seed, np.array([stream], dtype=np.uint64))
        return float(uniforms(key, [counter])[0, 0])

    def spawn(self, label: int) -> "CounterRNG":
        """Independent generator for a sub-experiment."""
        return CounterRNG(int(mix64(np.uint64(self.seed % 2 ** 64) ^ mix64(np.uint64(label)))))
