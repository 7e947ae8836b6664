"""Counter-based random numbers (Philox4x32-10), vectorized over streams.

Every draw is a pure function of ``(master_seed, stream, block)``: the 64-bit
master seed is the Philox key, and the 128-bit counter holds the block index
(low words) and stream id (high words). Results therefore do not depend on
how trajectories are batched or distributed across workers.
"""
from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
ROUNDS = 10

#: Block offset reserved for auxiliary (non-jump) draws within a stream.
AUX_BLOCK = 1 << 62
_TAG_SHIFT = 48


def philox4x32(counter, key, rounds: int = ROUNDS) -> np.ndarray:
    """Philox4x32 bijection.

    Args:
        counter: integer array of shape ``(..., 4)`` with 32-bit words.
        key: integer array of shape ``(..., 2)`` (broadcastable to counter).
        rounds: number of rounds, 10 for the standard generator.

    Returns:
        uint32 array of shape ``(..., 4)``.
    """
    c = np.asarray(counter, dtype=np.uint64) & _MASK32
    k = np.asarray(key, dtype=np.uint64) & _MASK32
    c0, c1, c2, c3 = (c[..., j] for j in range(4))
    k0, k1 = k[..., 0], k[..., 1]
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def _split64(x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.uint64)
    return x & _MASK32, x >> _SHIFT32


def seed_key(seed: int) -> np.ndarray:
    seed = int(seed)
    if not 0 <= seed < 1 << 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.array([seed & 0xFFFFFFFF, seed >> 32], dtype=np.uint64)


def stream_id(index, tag: int = 0) -> np.ndarray:
    """Stream id for trajectory ``index`` under purpose ``tag`` (< 2**16)."""
    index = np.asarray(index, dtype=np.uint64)
    if not 0 <= tag < 1 << 16:
        raise ValueError("tag must fit in 16 bits")
    return index | (np.uint64(tag) << np.uint64(_TAG_SHIFT))


def random_words(seed: int, streams, blocks) -> np.ndarray:
    """Raw uint32 words of shape ``broadcast(streams, blocks).shape + (4,)``."""
    s_lo, s_hi = _split64(streams)
    b_lo, b_hi = _split64(blocks)
    b_lo, b_hi, s_lo, s_hi = np.broadcast_arrays(b_lo, b_hi, s_lo, s_hi)
    ctr = np.stack([b_lo, b_hi, s_lo, s_hi], axis=-1)
    return philox4x32(ctr, seed_key(seed))


def words_to_uniforms(words: np.ndarray) -> np.ndarray:
    """Map each pair of 32-bit words to a double in the open interval (0, 1)."""
    w = words.astype(np.uint64)
    a = w[..., 0::2] >> np.uint64(5)
    b = w[..., 1::2] >> np.uint64(6)
    return (a.astype(np.float64) * 67108864.0 + b.astype(np.float64) + 0.5) / 9007199254740992.0


def uniforms(seed: int, streams, blocks) -> np.ndarray:
    """Two uniforms in (0, 1) per (stream, block): shape ``(..., 2)``."""
    return words_to_uniforms(random_words(seed, streams, blocks))


class CounterRng:
    """Sequential uniform source over a single ``(seed, stream)`` pair.

    Provides ``random(size)`` so it can stand in for a numpy Generator where
    only uniforms are needed.
    """

    def __init__(self, seed: int, stream: int = 0, block: int = 0):
        seed_key(seed)
        self.seed = int(seed)
        self.stream = int(stream)
        self.block = int(block)
        self._buffer: list[float] = []

    def _refill(self, count: int) -> None:
        nblocks = (count + 1) // 2
        blocks = np.arange(self.block, self.block + nblocks, dtype=np.uint64)
        u = uniforms(self.seed, np.uint64(self.stream), blocks).reshape(-1)
        self.block += nblocks
        self._buffer.extend(u.tolist())

    def random(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        if len(self._buffer) < n:
            self._refill(n - len(self._buffer))
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        if size is None:
            return out[0]
        return np.asarray(out).reshape(size)

    def integers(self, high: int, size=None):
        u = self.random(size)
        return np.minimum(np.floor(np.asarray(u) * high), high - 1).astype(np.int64)
