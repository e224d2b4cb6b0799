"""Orthonormal filter banks and the periodized multilevel 2D DWT.

Conventions
-----------
Analysis is a circular convolution followed by keeping even outputs::

    approx[n] = sum_k h[k] * x[(2n - k) mod N]
    detail[n] = sum_k g[k] * x[(2n - k) mod N]

Synthesis is the exact adjoint, so ``idwt1d(dwt1d(x)) == x`` and the map is an
isometry.  In 2D the rows (last axis) are filtered first, then the columns.
Subband names:

* ``a``  low-pass along rows and columns
* ``d1`` high-pass along rows, low-pass along columns (responds to vertical edges)
* ``d2`` low-pass along rows, high-pass along columns (responds to horizontal edges)
* ``d3`` high-pass along both

All transforms act on the trailing axes, so a ``(C, H, W)`` image and an
``(N, C, H, W)`` batch are handled the same way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UnsupportedWaveletError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class FilterBank:
    name: str
    h: np.ndarray
    g: np.ndarray
    h_s: np.ndarray
    g_s: np.ndarray

    @property
    def length(self) -> int:
        return len(self.h)


def _db2_lowpass() -> np.ndarray:
    s3 = np.sqrt(3.0)
    return np.array([1 + s3, 3 + s3, 3 - s3, 1 - s3]) / (4 * np.sqrt(2.0))


_LOWPASS = {
    "haar": lambda: np.array([1.0, 1.0]) / np.sqrt(2.0),
    "db2": _db2_lowpass,
}


def make_filterbank(name: str) -> FilterBank:
    """Build the orthonormal bank ``name`` ("haar" or "db2")."""
    try:
        h = _LOWPASS[name]()
    except KeyError:
        raise UnsupportedWaveletError(
            f"unsupported wavelet {name!r}; expected one of {sorted(_LOWPASS)}"
        ) from None
    L = len(h)
    # quadrature mirror: g[n] = (-1)^n h[L-1-n]
    g = h[::-1] * (-1.0) ** np.arange(L)
    return FilterBank(name, h, g, h[::-1].copy(), g[::-1].copy())


def _analysis(x: np.ndarray, f: np.ndarray, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, -1)
    N = x.shape[-1]
    n2 = 2 * np.arange(N // 2)
    out = np.zeros(x.shape[:-1] + (N // 2,))
    for k, fk in enumerate(f):
        out += fk * x[..., (n2 - k) % N]
    return np.moveaxis(out, -1, axis)


def _synthesis(c: np.ndarray, f_s: np.ndarray, axis: int) -> np.ndarray:
    # u = upsampled c; x[m] = sum_j f_s[j] u[(m + L-1 - j) mod N]
    c = np.moveaxis(c, axis, -1)
    M = c.shape[-1]
    N = 2 * M
    L = len(f_s)
    u = np.zeros(c.shape[:-1] + (N,))
    u[..., ::2] = c
    m = np.arange(N)
    out = np.zeros_like(u)
    for j, fj in enumerate(f_s):
        out += fj * u[..., (m + L - 1 - j) % N]
    return np.moveaxis(out, -1, axis)


def _check_even(n: int, fb: FilterBank, what: str) -> None:
    if n % 2:
        raise ShapeError(f"{what} has odd extent {n}")
    if n < fb.length:
        raise ShapeError(f"{what} extent {n} is shorter than the {fb.name} filter ({fb.length})")


def dwt1d(x, fb: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    _check_even(x.shape[-1], fb, "signal")
    return _analysis(x, fb.h, -1), _analysis(x, fb.g, -1)


def idwt1d(approx, detail, fb: FilterBank) -> np.ndarray:
    approx = np.asarray(approx, dtype=np.float64)
    detail = np.asarray(detail, dtype=np.float64)
    if approx.shape != detail.shape:
        raise ShapeError(f"approx {approx.shape} and detail {detail.shape} differ")
    return _synthesis(approx, fb.h_s, -1) + _synthesis(detail, fb.g_s, -1)


@dataclass
class Subbands2D:
    a: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray

    @property
    def details(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.d1, self.d2, self.d3


def dwt2d(img, fb: FilterBank) -> Subbands2D:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim < 2:
        raise ShapeError("dwt2d needs at least two axes")
    _check_even(img.shape[-2], fb, "height")
    _check_even(img.shape[-1], fb, "width")
    lo = _analysis(img, fb.h, -1)
    hi = _analysis(img, fb.g, -1)
    return Subbands2D(
        a=_analysis(lo, fb.h, -2),
        d1=_analysis(hi, fb.h, -2),
        d2=_analysis(lo, fb.g, -2),
        d3=_analysis(hi, fb.g, -2),
    )


def idwt2d(sb: Subbands2D, fb: FilterBank) -> np.ndarray:
    shapes = {b.shape for b in (sb.a, sb.d1, sb.d2, sb.d3)}
    if len(shapes) != 1:
        raise ShapeError(f"subband shapes disagree: {sorted(shapes)}")
    lo = _synthesis(sb.a, fb.h_s, -2) + _synthesis(sb.d2, fb.g_s, -2)
    hi = _synthesis(sb.d1, fb.h_s, -2) + _synthesis(sb.d3, fb.g_s, -2)
    return _synthesis(lo, fb.h_s, -1) + _synthesis(hi, fb.g_s, -1)


@dataclass
class Pyramid:
    """``details[j-1]`` holds the (d1, d2, d3) triple of level ``j``."""

    approx: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    base_shape: tuple[int, ...] = field(default=())

    @property
    def levels(self) -> int:
        return len(self.details)

    def level(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.details[j - 1]

    def energies(self) -> dict[str, float]:
        out = {f"a{self.levels}": float(np.sum(self.approx**2))}
        for j, triple in enumerate(self.details, start=1):
            for k, d in enumerate(triple, start=1):
                out[f"d{j}{k}"] = float(np.sum(d**2))
        return out


def decompose(img, J: int, fb: FilterBank) -> Pyramid:
    img = np.asarray(img, dtype=np.float64)
    if J < 1:
        raise ShapeError(f"level count must be >= 1, got {J}")
    H, W = img.shape[-2:]
    if H % 2**J or W % 2**J:
        raise ShapeError(f"{H}x{W} is not divisible by 2^{J}")
    details = []
    a = img
    for _ in range(J):
        sb = dwt2d(a, fb)
        details.append(sb.details)
        a = sb.a
    return Pyramid(a, details, tuple(img.shape))


def reconstruct(p: Pyramid, fb: FilterBank) -> np.ndarray:
    a = p.approx
    for j in range(p.levels, 0, -1):
        d1, d2, d3 = p.level(j)
        if a.shape != d1.shape:
            raise ShapeError(f"level {j}: approx {a.shape} vs details {d1.shape}")
        a = idwt2d(Subbands2D(a, d1, d2, d3), fb)
    return a


def replace_details(p: Pyramid, j0: int, new_details) -> Pyramid:
    """Copy of ``p`` with the level-``j0`` detail triple swapped out."""
    if not 1 <= j0 <= p.levels:
        raise ShapeError(f"level {j0} outside 1..{p.levels}")
    new_details = tuple(np.asarray(d, dtype=np.float64) for d in new_details)
    if len(new_details) != 3:
        raise ShapeError("expected a detail triple")
    expected = p.level(j0)[0].shape
    for d in new_details:
        if d.shape != expected:
            raise ShapeError(f"level {j0} detail must have shape {expected}, got {d.shape}")
    details = list(p.details)
    details[j0 - 1] = new_details
    return Pyramid(p.approx, details, p.base_shape)


def stack_details(triple) -> np.ndarray:
    """Concatenate (d1, d2, d3) along the channel axis (axis -3)."""
    return np.concatenate(triple, axis=-3)


def split_details(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c = stack.shape[-3] // 3
    return stack[..., :c, :, :], stack[..., c : 2 * c, :, :], stack[..., 2 * c :, :, :]
