"""Binary 8-bit PGM (P5, one channel) and PPM (P6, three channels) files."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..numerics import clamp01


class ImageFormatError(ValueError):
    pass


def write_image(path, img) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"expected (1|3, H, W) image, got {img.shape}")
    if img.size and (img.min() < 0 or img.max() > 1):
        raise ValueError("pixel values must lie in [0, 1]")
    c, h, w = img.shape
    data = np.round(img * 255.0).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    body = data[0].tobytes() if c == 1 else data.transpose(1, 2, 0).tobytes()
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + body)


_HEADER = re.compile(rb"(P[56])\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def read_image(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    m = _HEADER.match(buf)
    if not m:
        raise ImageFormatError(f"{path}: not a binary PGM/PPM header")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    c = 1 if magic == b"P5" else 3
    need = w * h * c
    data = buf[m.end() :]
    if len(data) < need:
        raise ImageFormatError(f"{path}: truncated pixel data ({len(data)} of {need} bytes)")
    arr = np.frombuffer(data, dtype=np.uint8, count=need).astype(np.float64) / 255.0
    return arr.reshape(1, h, w) if c == 1 else arr.reshape(h, w, 3).transpose(2, 0, 1).copy()


def residual_image(x, x_adv, gain: float = 5.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    if x.shape != x_adv.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_adv.shape}")
    if gain <= 0:
        raise ValueError("gain must be > 0")
    return clamp01(gain * np.abs(x - x_adv))


def export_residual(path, x, x_adv, gain: float = 5.0) -> np.ndarray:
    """Write ``clamp01(gain * |x - x_adv|)`` and return it."""
    res = residual_image(x, x_adv, gain)
    write_image(path, res)
    return res
