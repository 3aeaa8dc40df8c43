"""Counter-based deterministic random numbers (Philox 4x64, 10 rounds).

The generator is pinned by algorithm, not by library: the same seed and
stream produce the identical value sequence on any platform. Uniform
doubles take the top 53 bits of each 64-bit word, so outputs are exactly
reproducible and independent of how many values earlier streams consumed.
"""

from __future__ import annotations

import numpy as np

_MASK32 = np.uint64(0xFFFFFFFF)
_MASK64 = 0xFFFFFFFFFFFFFFFF
_SHIFT32 = np.uint64(32)
_MULT_HI = np.uint64(0xD2E7470EE14C6C93)
_MULT_LO = np.uint64(0xCA5A826395121157)
_BUMP_HI = np.uint64(0x9E3779B97F4A7C15)
_BUMP_LO = np.uint64(0xBB67AE8584CAA73B)


def _mulhilo(mult, word):
    """Full 64x64 -> 128 bit product as (high, low) uint64 arrays."""
    lo = mult * word
    al = mult & _MASK32
    ah = mult >> _SHIFT32
    bl = word & _MASK32
    bh = word >> _SHIFT32
    carry = ((al * bl) >> _SHIFT32) + ((al * bh) & _MASK32) \
        + ((ah * bl) & _MASK32)
    hi = ah * bh + ((al * bh) >> _SHIFT32) + ((ah * bl) >> _SHIFT32) \
        + (carry >> _SHIFT32)
    return hi, lo


def philox4x64(counters, key, rounds=10):
    """Apply the Philox block cipher to an (n, 4) uint64 counter array.

    ``key`` is a pair of 64-bit integers. Returns the (n, 4) uint64 output
    block for each counter.
    """
    c = np.array(counters, dtype=np.uint64, copy=True)
    if c.ndim != 2 or c.shape[1] != 4:
        raise ValueError("counters must have shape (n, 4)")
    k0 = np.uint64(key[0] & _MASK64)
    k1 = np.uint64(key[1] & _MASK64)
    c0, c1, c2, c3 = c[:, 0], c[:, 1], c[:, 2], c[:, 3]
    with np.errstate(over="ignore"):
        for _ in range(rounds):
            hi0, lo0 = _mulhilo(_MULT_HI, c0)
            hi1, lo1 = _mulhilo(_MULT_LO, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _BUMP_HI
            k1 = k1 + _BUMP_LO
    return np.stack([c0, c1, c2, c3], axis=1)


def raw_words(seed, count, stream=0):
    """First ``count`` words of the (seed, stream) Philox output sequence.

    The counter increments along its first word; ``stream`` is the second
    key word, so distinct streams are independent full-period sequences.
    """
    blocks = (count + 3) // 4
    counters = np.zeros((blocks, 4), dtype=np.uint64)
    counters[:, 0] = np.arange(blocks, dtype=np.uint64)
    out = philox4x64(counters, (seed, stream))
    return out.reshape(-1)[:count]


def uniform_doubles(seed, count, stream=0):
    """``count`` uniforms in [0, 1): top 53 bits of each word over 2^53."""
    words = raw_words(seed, count, stream)
    return (words >> np.uint64(11)) * (2.0 ** -53)
