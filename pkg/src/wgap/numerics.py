"""Seeded random streams and the few elementwise helpers shared by every module.

Tensors are plain ``numpy.ndarray`` values of dtype float64.  Every stochastic
routine in the package takes an explicit :class:`Prng`; sub-streams are derived
by name so adding a new consumer never shifts another consumer's draws.
"""

from __future__ import annotations

import zlib

import numpy as np

Tensor = np.ndarray


class EmptyRequestError(ValueError):
    """Raised when a sampler is asked for zero values."""


class Prng:
    """Deterministic PCG64 stream with named, independent sub-streams."""

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._key = _key
        seq = np.random.SeedSequence(self.seed, spawn_key=_key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, name: str) -> "Prng":
        """Independent stream keyed by ``name``; does not advance this stream."""
        return Prng(self.seed, self._key + (zlib.crc32(name.encode("utf-8")),))

    def uniform(self, n: int | tuple[int, ...]) -> Tensor:
        return self._gen.random(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def normal(self, shape) -> Tensor:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape))
        return gaussian_sample(self, n).reshape(shape)


def prng_stream(seed: int) -> Prng:
    return Prng(seed)


def gaussian_sample(rng: Prng, n: int) -> Tensor:
    """Standard normal draws from uniform pairs (Box-Muller)."""
    if n < 1:
        raise EmptyRequestError("gaussian_sample needs n >= 1")
    m = (n + 1) // 2
    u1 = rng.uniform(m)
    u2 = rng.uniform(m)
    # 1 - u keeps the log argument in (0, 1]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    theta = 2.0 * np.pi * u2
    out = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
    return out[:n]


def clamp01(x: Tensor) -> Tensor:
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def as_tensor(x) -> Tensor:
    """float64 copy of ``x``; rejects NaN/Inf."""
    arr = np.array(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr
