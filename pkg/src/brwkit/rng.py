"""Splittable, counter-based randomness built on the splitmix64 finalizer.

Every random object in this library (a tree node, a replicate, a sample index)
owns a 64-bit key.  New keys are derived by hashing (key, index); uniforms are
produced by hashing a key through an independent channel.  Because derivation
is a pure function, replicate k of a batch -- and child j of a tree node -- is
reproducible regardless of evaluation order or parallel scheduling.

Scalar (Python int) and vectorized (uint64 ndarray) code paths implement the
same mixing function bit for bit; tests assert the two agree.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# Channel salts: keep "what uniform does this node need" streams disjoint.
SALT_STEP = 0xA5A5A5A5A5A5A5A5
SALT_OFFSPRING = 0x5A5A5A5A5A5A5A5A
SALT_RESTART = 0xC3C3C3C3C3C3C3C3


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int (mod 2^64)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def derive_key(key: int, index: int) -> int:
    """Key for the index-th child stream of `key`."""
    return mix64((key + _GAMMA * (index + 1)) & _MASK)


def key_uniform(key: int, salt: int) -> float:
    """One uniform in (0,1) from (key, salt); independent across salts."""
    h = mix64(key ^ salt)
    return ((h >> 11) + 0.5) * 2.0**-53


def mix64_vec(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def derive_keys_vec(keys: np.ndarray, index) -> np.ndarray:
    """Vectorized derive_key; `index` may be a scalar or an array."""
    idx = np.asarray(index, dtype=np.uint64)
    return mix64_vec(keys.astype(np.uint64) + np.uint64(_GAMMA) * (idx + np.uint64(1)))


def key_uniform_vec(keys: np.ndarray, salt: int) -> np.ndarray:
    h = mix64_vec(keys.astype(np.uint64) ^ np.uint64(salt))
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def stream_uniforms(seed: int, count: int, start: int = 0, salt: int = SALT_STEP) -> np.ndarray:
    """Uniforms for sample indices [start, start+count) of the stream `seed`."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    keys = derive_keys_vec(np.full(count, seed & _MASK, dtype=np.uint64), idx)
    return key_uniform_vec(keys, salt)


def generator(seed: int) -> np.random.Generator:
    """A numpy Generator on a Philox stream keyed by `seed` (bulk sequential use)."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK))
