"""Generator and classifier architectures."""

from __future__ import annotations

import numpy as np

from ..numerics import Prng
from .layers import (
    Conv2d,
    Dense,
    DownsampleConv,
    InstanceNorm,
    Layer,
    ReLU,
    ResidualBlock,
    Sequential,
    Softmax,
    Standardize,
    Tanh,
    UpsampleConv,
)


def generator_depth(extent: int, max_depth: int = 2) -> int:
    """Number of stride-2 encoder stages that keep the bottleneck at least 2 x 2."""
    d = 0
    while d < max_depth and extent % 2 ** (d + 1) == 0 and extent // 2 ** (d + 1) >= 2:
        d += 1
    return d


class GeneratorNet(Sequential):
    """ResNet-style encoder / residual trunk / decoder with a tanh output.

    ``depth`` stride-2 stages (default 2) double the width each time; the
    decoder mirrors them.  Shape preserving for extents divisible by
    ``2**depth``.  Instance norm over a 1 x 1 map is identically zero, so
    small inputs need a shallower encoder (see :func:`generator_depth`).
    """

    def __init__(self, channels: int, rng: Prng, filters: int = 16, blocks: int = 2, depth: int = 2):
        if depth < 0:
            raise ValueError("depth must be >= 0")
        self.channels, self.filters, self.blocks, self.depth = channels, filters, blocks, depth
        F = filters
        layers: list[Layer] = [
            Conv2d(channels, F, 7, rng.child("enc0"), pad_mode="reflect"),
            InstanceNorm(F),
            ReLU(),
        ]
        for i in range(1, depth + 1):
            layers += [
                DownsampleConv(F * 2 ** (i - 1), F * 2**i, rng.child(f"enc{i}"), pad_mode="reflect"),
                InstanceNorm(F * 2**i),
                ReLU(),
            ]
        layers += [ResidualBlock(F * 2**depth, rng.child(f"res{b}")) for b in range(blocks)]
        for i in range(depth, 0, -1):
            layers += [
                UpsampleConv(F * 2**i, F * 2 ** (i - 1), rng.child(f"dec{depth - i + 1}")),
                InstanceNorm(F * 2 ** (i - 1)),
                ReLU(),
            ]
        layers += [Conv2d(F, channels, 7, rng.child("out"), pad_mode="reflect"), Tanh()]
        super().__init__(layers)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"generator expects (N, {self.channels}, H, W), got {x.shape}")
        m = 2**self.depth
        if x.shape[2] % m or x.shape[3] % m:
            raise ValueError(f"generator needs extents divisible by {m}, got {x.shape[2:]}")
        return super().forward(x)


class ClassifierNet(Sequential):
    """Small CNN ending in a softmax, with fixed input standardization in front.

    ``surrogate``: two stride-2 3x3 conv blocks, then two dense layers.
    ``transfer_target``: 5x5 / 3x3 / 3x3 stride-2 conv blocks, one dense layer.
    """

    VARIANTS = ("surrogate", "transfer_target")

    def __init__(self, variant: str, channels: int, size: int, num_classes: int, rng: Prng):
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown classifier variant {variant!r}")
        self.variant, self.channels, self.size, self.num_classes = variant, channels, size, num_classes
        if variant == "surrogate":
            flat = 32 * (size // 4) ** 2
            layers = [
                Standardize(),
                DownsampleConv(channels, 16, rng.child("c1")),
                ReLU(),
                DownsampleConv(16, 32, rng.child("c2")),
                ReLU(),
                Dense(flat, 64, rng.child("d1")),
                ReLU(),
                Dense(64, num_classes, rng.child("d2")),
                Softmax(),
            ]
        else:
            flat = 32 * (size // 8) ** 2
            layers = [
                Standardize(),
                DownsampleConv(channels, 12, rng.child("c1"), k=5),
                ReLU(),
                DownsampleConv(12, 24, rng.child("c2")),
                ReLU(),
                DownsampleConv(24, 32, rng.child("c3")),
                ReLU(),
                Dense(flat, num_classes, rng.child("d1")),
                Softmax(),
            ]
        super().__init__(layers)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1:] != (self.channels, self.size, self.size):
            raise ValueError(
                f"{self.variant} expects (N, {self.channels}, {self.size}, {self.size}), got {x.shape}"
            )
        return super().forward(x)

    def predict(self, x: np.ndarray, batch: int = 256) -> np.ndarray:
        """Class probabilities, computed in chunks; clobbers the backward cache."""
        return np.concatenate([self.forward(x[i : i + batch]) for i in range(0, len(x), batch)])
