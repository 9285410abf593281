"""Counter-based pseudo-random primitives.

Every random quantity in this package is a pure function of
``(seed, stream tag, counter index)`` so that repeated runs, partitioned
runs, and reimplementations in other languages can reproduce frames
bit-exactly.  The algorithm is deliberately boring and fully specified:

* ``fnv1a64(tag)``: FNV-1a over the UTF-8 bytes of the tag
  (offset basis 0xcbf29ce484222325, prime 0x100000001b3).
* ``splitmix64(x)``: the standard finalizer
  ``x += 0x9E3779B97F4A7C15; z = x; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
  z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31`` (mod 2^64).
* stream base: ``splitmix64(splitmix64(seed) ^ fnv1a64(tag))``.
* word ``i`` of a stream: ``splitmix64(base + i)``.
* uniform double ``i``: top 53 bits of word ``i`` scaled by 2^-53, in [0, 1).
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(tag: str) -> int:
    h = _FNV_BASIS
    for byte in tag.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def splitmix64(x: int) -> int:
    x = (x + _GAMMA) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps mod 2^64, matching the scalar definition
    with np.errstate(over="ignore"):
        x = x + np.uint64(_GAMMA)
        z = x.copy()
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
    return z


def stream_base(seed: int, tag: str) -> int:
    return splitmix64(splitmix64(seed & _MASK) ^ fnv1a64(tag))


def u64_stream(seed: int, tag: str, n: int, offset: int = 0) -> np.ndarray:
    """Words ``offset .. offset+n`` of the (seed, tag) stream as uint64."""
    base = stream_base(seed, tag)
    counters = np.arange(offset, offset + n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        counters += np.uint64(base)
    return _splitmix64_array(counters)


def uniform_stream(seed: int, tag: str, n: int, offset: int = 0) -> np.ndarray:
    """n uniform float64 draws in [0, 1)."""
    words = u64_stream(seed, tag, n, offset)
    return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def permutation(seed: int, tag: str, n: int) -> np.ndarray:
    """Deterministic permutation of range(n): argsort of the key stream."""
    keys = u64_stream(seed, tag, n)
    return np.argsort(keys, kind="stable")


def choice_from_probs(seed: int, tag: str, n: int, probs: np.ndarray) -> np.ndarray:
    """n categorical draws via inverse CDF on the uniform stream."""
    cdf = np.cumsum(np.asarray(probs, dtype=np.float64))
    u = uniform_stream(seed, tag, n)
    return np.searchsorted(cdf, u, side="right").astype(np.int64).clip(0, len(cdf) - 1)
