"""Input-transformation defenses: DCT quantization, random resize-pad, wavelet shrinkage.

All defenses take ``(C, H, W)`` images or ``(N, C, H, W)`` batches in [0, 1]
and return the same shape in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Prng, clamp01
from .wavelet import FilterBank, ShapeError, decompose, make_filterbank, reconstruct

# ITU-T T.81 Annex K luminance table
LUMINANCE_Q = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

KINDS = ("jpeg", "randomization", "wavelet_denoise")


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    quality: int = 75
    min_ratio: float = 0.85
    tau: float = 0.05
    levels: int = 1
    wavelet: str = "haar"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown defense {self.kind!r}; expected one of {KINDS}")
        if not 1 <= self.quality <= 100:
            raise ValueError(f"jpeg quality {self.quality} outside 1..100")
        if not 0 < self.min_ratio <= 1:
            raise ValueError(f"min_ratio {self.min_ratio} outside (0, 1]")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def label(self) -> str:
        if self.kind == "jpeg":
            return f"jpeg_q{self.quality}"
        if self.kind == "randomization":
            return f"randomization_r{self.min_ratio:g}"
        return f"wavelet_denoise_t{self.tau:g}"


def quant_table(quality: int) -> np.ndarray:
    """IJG quality scaling of the luminance table; quality 100 gives all ones."""
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((LUMINANCE_Q * scale + 50.0) / 100.0), 1.0, 255.0)


def _dct_matrix(n: int = 8) -> np.ndarray:
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    D = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    D[0] /= np.sqrt(2.0)
    return D


_DCT8 = _dct_matrix()


def jpeg_defense(x, quality: int = 75) -> np.ndarray:
    """8x8 block DCT, quantize/dequantize with the scaled table, inverse DCT.

    No colour conversion or entropy coding; every channel uses the luminance
    table.  Output is rounded to 8-bit levels like a decoded JPEG.
    """
    x = np.asarray(x, dtype=np.float64)
    H, W = x.shape[-2:]
    if H % 8 or W % 8:
        raise ShapeError(f"jpeg_defense needs extents divisible by 8, got {H}x{W}")
    if not 1 <= quality <= 100:
        raise ValueError(f"quality {quality} outside 1..100")
    Q = quant_table(quality)
    lead = x.shape[:-2]
    blocks = (x * 255.0 - 128.0).reshape(lead + (H // 8, 8, W // 8, 8))
    coef = np.einsum("ij,...ajbk,lk->...aibl", _DCT8, blocks, _DCT8)
    coef = np.round(coef / Q[:, None, :]) * Q[:, None, :]
    back = np.einsum("ij,...aibl,lk->...ajbk", _DCT8, coef, _DCT8)
    out = np.round(back.reshape(x.shape) + 128.0)
    return clamp01(out / 255.0)


def _bilinear_resize(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize of the trailing two axes."""
    H, W = img.shape[-2:]

    def coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = coords(h, H)
    x0, x1, fx = coords(w, W)
    top = img[..., y0, :] * (1 - fy)[:, None] + img[..., y1, :] * fy[:, None]
    return top[..., x0] * (1 - fx) + top[..., x1] * fx


def randomization_defense(x, spec: DefenseSpec, rng: Prng | None = None) -> np.ndarray:
    """Resize by r ~ U[min_ratio, 1] then zero-pad back at a random offset.

    Each image of a batch draws its own ratio and offset.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = rng if rng is not None else Prng(spec.seed).child("randomization")
    batch = x.reshape((-1,) + x.shape[-3:])
    H, W = x.shape[-2:]
    out = np.zeros_like(batch)
    for i, img in enumerate(batch):
        u = rng.uniform(3)
        r = spec.min_ratio + (1.0 - spec.min_ratio) * u[0]
        h = min(H, max(1, int(round(r * H))))
        w = min(W, max(1, int(round(r * W))))
        oy = int(u[1] * (H - h + 1))
        ox = int(u[2] * (W - w + 1))
        small = img if (h, w) == (H, W) else _bilinear_resize(img, h, w)
        out[i, :, oy : oy + h, ox : ox + w] = small
    return clamp01(out.reshape(x.shape))


def soft_threshold(d, tau: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    return np.sign(d) * np.maximum(np.abs(d) - tau, 0.0)


def wavelet_denoise(x, tau: float, fb: FilterBank | str = "haar", J: int = 1) -> np.ndarray:
    """Soft-threshold every detail coefficient of a J-level decomposition."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    fb = make_filterbank(fb) if isinstance(fb, str) else fb
    p = decompose(x, J, fb)
    p.details = [tuple(soft_threshold(d, tau) for d in triple) for triple in p.details]
    return clamp01(reconstruct(p, fb))


def apply_defense(spec: DefenseSpec, x, rng: Prng | None = None) -> np.ndarray:
    if spec.kind == "jpeg":
        return jpeg_defense(x, spec.quality)
    if spec.kind == "randomization":
        return randomization_defense(x, spec, rng)
    return wavelet_denoise(x, spec.tau, spec.wavelet, spec.levels)
