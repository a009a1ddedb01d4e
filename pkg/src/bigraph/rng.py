"""Seed derivation and counter-based uniforms.

Every random stream in the package is addressed by a tuple of integers
(master seed, purpose, index, ...) so that results never depend on the
order in which replications happen to execute.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def generator(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for the stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit child seed for ``(seed, *keys)``; pure function of its inputs."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    lo, hi = (int(x) for x in ss.generate_state(2, dtype=np.uint32))
    return (hi << 32) | lo


def entropy_seed() -> int:
    return derive_seed(np.random.SeedSequence().entropy)


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorised splitmix64 finaliser on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def pair_uniforms(seed: int, block: int, t: np.ndarray) -> np.ndarray:
    """Uniforms in [0, 1) indexed by (seed, block, pair index t).

    The value for a given pair index never depends on which other indices
    are requested, which is what makes per-pair couplings assertable.
    """
    key = splitmix64(np.array([derive_seed(seed, 0x5EED, block)], dtype=np.uint64))[0]
    t = np.asarray(t, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = splitmix64(key + t * _GOLDEN)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
