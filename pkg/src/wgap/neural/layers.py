"""Reverse-mode layers on ``(N, C, H, W)`` float64 batches.

Each layer caches what its backward pass needs during ``forward``; calling
``backward`` first raises :class:`NoForwardError`.  Parameter gradients are
overwritten (not accumulated) by each ``backward`` call.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..numerics import Prng


class NoForwardError(RuntimeError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _cached(self):
        if self._cache is None:
            raise NoForwardError(f"{self.kind}: backward called before forward")
        return self._cache

    def named_params(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, p in self.params.items():
            yield prefix + name, p

    def named_grads(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, p in self.params.items():
            yield prefix + name, self.grads.get(name, np.zeros_like(p))

    def __repr__(self):
        return f"{type(self).__name__}()"


def _pad_index(n: int, p: int, mode: str) -> np.ndarray:
    idx = np.arange(-p, n + p)
    if mode == "zero":
        idx[(idx < 0) | (idx >= n)] = -1
    elif mode == "reflect":
        if n == 1:
            idx[:] = 0
        else:
            period = 2 * (n - 1)
            idx = np.abs(idx) % period
            idx = np.where(idx >= n, period - idx, idx)
    else:
        raise ValueError(f"unknown padding mode {mode!r}")
    return idx


def _pad_matrix(n: int, p: int, mode: str) -> np.ndarray:
    idx = _pad_index(n, p, mode)
    P = np.zeros((n + 2 * p, n))
    rows = np.nonzero(idx >= 0)[0]
    P[rows, idx[rows]] = 1.0
    return P


class Conv2d(Layer):
    """k x k convolution with "same" padding (zero or reflect) and a stride."""

    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, k: int, rng: Prng, stride: int = 1, pad_mode: str = "zero"):
        super().__init__()
        self.c_in, self.c_out, self.k, self.stride, self.pad_mode = c_in, c_out, k, stride, pad_mode
        self.pad = k // 2
        std = np.sqrt(2.0 / (c_in * k * k))
        self.params["weight"] = std * rng.normal((c_out, c_in, k, k))
        self.params["bias"] = np.zeros(c_out)
        self._pad_mats: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def _mats(self, H: int, W: int):
        key = (H, W)
        if key not in self._pad_mats:
            self._pad_mats[key] = (
                _pad_matrix(H, self.pad, self.pad_mode),
                _pad_matrix(W, self.pad, self.pad_mode),
            )
        return self._pad_mats[key]

    def forward(self, x):
        N, C, H, W = x.shape
        if C != self.c_in:
            raise ValueError(f"conv2d expects {self.c_in} channels, got {C}")
        Ph, Pw = self._mats(H, W)
        xp = Ph @ x @ Pw.T
        s, k = self.stride, self.k
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        _, _, Ho, Wo = win.shape[:4]
        # im2col as (C*k*k, N*Ho*Wo): one copy with unit-stride inner reads, reused by backward
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(C * k * k, N * Ho * Wo)
        out = self.params["weight"].reshape(self.c_out, -1) @ cols
        out = out.reshape(self.c_out, N, Ho, Wo).transpose(1, 0, 2, 3) + self.params["bias"][:, None, None]
        self._cache = (x.shape, xp.shape, cols)
        return out

    def backward(self, grad):
        x_shape, xp_shape, cols = self._cached()
        s, k = self.stride, self.k
        N, O, Ho, Wo = grad.shape
        w = self.params["weight"]
        gT = grad.transpose(1, 0, 2, 3).reshape(O, -1)
        self.grads["weight"] = (gT @ cols.T).reshape(w.shape)
        self.grads["bias"] = grad.sum(axis=(0, 2, 3))
        # (C*k*k, N*Ho*Wo) product lands tap-major without a transpose copy
        dcols = (w.reshape(O, -1).T @ gT).reshape(self.c_in, k, k, N, Ho, Wo)
        # col2im: scatter each kernel tap back onto the padded input (channel-major)
        dxp = np.zeros((xp_shape[1], xp_shape[0]) + xp_shape[2:])
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * (Ho - 1) + 1 : s, j : j + s * (Wo - 1) + 1 : s] += dcols[:, i, j]
        dxp = dxp.transpose(1, 0, 2, 3)
        Ph, Pw = self._mats(*x_shape[2:])
        return Ph.T @ dxp @ Pw


class DownsampleConv(Conv2d):
    kind = "downsample_conv"

    def __init__(self, c_in, c_out, rng, k=3, pad_mode="zero"):
        super().__init__(c_in, c_out, k, rng, stride=2, pad_mode=pad_mode)


class UpsampleConv(Layer):
    """Nearest-neighbour 2x upsampling followed by a 3x3 convolution."""

    kind = "upsample_conv"

    def __init__(self, c_in, c_out, rng, k=3, pad_mode="reflect"):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, k, rng, pad_mode=pad_mode)
        self.params = self.conv.params

    def forward(self, x):
        self._cache = True
        up = x.repeat(2, axis=2).repeat(2, axis=3)
        return self.conv.forward(up)

    def backward(self, grad):
        self._cached()
        g = self.conv.backward(grad)
        self.grads = self.conv.grads
        N, C, H, W = g.shape
        return g.reshape(N, C, H // 2, 2, W // 2, 2).sum(axis=(3, 5))


class InstanceNorm(Layer):
    """Per-sample, per-channel normalisation with a learned scale and shift."""

    kind = "norm"

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)

    def forward(self, x):
        mu = x.mean(axis=(2, 3), keepdims=True)
        var = x.var(axis=(2, 3), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv)
        return self.params["gamma"][:, None, None] * xhat + self.params["beta"][:, None, None]

    def backward(self, grad):
        xhat, inv = self._cached()
        self.grads["gamma"] = (grad * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] = grad.sum(axis=(0, 2, 3))
        dxhat = grad * self.params["gamma"][:, None, None]
        mean_d = dxhat.mean(axis=(2, 3), keepdims=True)
        mean_dx = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
        return inv * (dxhat - mean_d - xhat * mean_dx)


class Standardize(Layer):
    """Fixed affine input scaling ``(x - mean) / std``; no parameters."""

    kind = "standardize"

    def __init__(self, mean: float = 0.5, std: float = 0.25):
        super().__init__()
        if std <= 0:
            raise ValueError("std must be > 0")
        self.mean, self.std = float(mean), float(std)

    def forward(self, x):
        self._cache = True
        return (x - self.mean) / self.std

    def backward(self, grad):
        self._cached()
        return grad / self.std


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0)

    def backward(self, grad):
        return np.where(self._cached(), grad, 0.0)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._cached()
        return grad * (1.0 - y * y)


class Dense(Layer):
    """Affine map on flattened features; accepts any ``(N, ...)`` input."""

    kind = "dense"

    def __init__(self, d_in: int, d_out: int, rng: Prng):
        super().__init__()
        self.params["weight"] = np.sqrt(2.0 / d_in) * rng.normal((d_in, d_out))
        self.params["bias"] = np.zeros(d_out)

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        self._cache = (x.shape, flat)
        return flat @ self.params["weight"] + self.params["bias"]

    def backward(self, grad):
        shape, flat = self._cached()
        self.grads["weight"] = flat.T @ grad
        self.grads["bias"] = grad.sum(axis=0)
        return (grad @ self.params["weight"].T).reshape(shape)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=-1, keepdims=True)
        self._cache = p
        return p

    def backward(self, grad):
        p = self._cached()
        return p * (grad - (grad * p).sum(axis=-1, keepdims=True))


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers: list[Layer]):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        self._cache = True
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        self._cached()
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def named_params(self, prefix=""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_params(f"{prefix}{i}.")

    def named_grads(self, prefix=""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_grads(f"{prefix}{i}.")

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.named_params())

    def gradients(self) -> dict[str, np.ndarray]:
        return dict(self.named_grads())

    def load_parameters(self, tensors: dict[str, np.ndarray]) -> None:
        own = self.parameters()
        missing = sorted(set(own) - set(tensors))
        extra = sorted(set(tensors) - set(own))
        if missing or extra:
            raise ValueError(f"parameter names differ: missing={missing} unexpected={extra}")
        for name, p in own.items():
            if tensors[name].shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {tensors[name].shape}")
            p[...] = tensors[name]

    def __repr__(self):
        inner = ", ".join(layer.kind for layer in self.layers)
        return f"{type(self).__name__}([{inner}])"


class ResidualBlock(Sequential):
    """``x + norm(conv(relu(norm(conv(x)))))`` with 3x3 reflect-padded convs."""

    kind = "residual_block"

    def __init__(self, channels: int, rng: Prng, pad_mode: str = "reflect"):
        super().__init__([
            Conv2d(channels, channels, 3, rng.child("conv1"), pad_mode=pad_mode),
            InstanceNorm(channels),
            ReLU(),
            Conv2d(channels, channels, 3, rng.child("conv2"), pad_mode=pad_mode),
            InstanceNorm(channels),
        ])

    def forward(self, x):
        return x + super().forward(x)

    def backward(self, grad):
        return grad + super().backward(grad)
