"""Scalar measurements: SSIM dissimilarity, norms, cross-entropy, fooling ratio."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12


class DegenerateInputError(ValueError):
    pass


@dataclass(frozen=True)
class SsimParams:
    L: float = 1.0
    k1: float = 0.01
    k2: float = 0.03

    @property
    def c1(self) -> float:
        return (self.k1 * self.L) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.L) ** 2


@dataclass
class EvalReport:
    model_name: str
    fooling_ratio: float
    mean_rel_l2: float
    mean_ssim_d: float
    n_samples: int
    defense: str = "none"
    fool_vs_truth: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.fooling_ratio <= 1.0:
            raise ValueError(f"fooling_ratio {self.fooling_ratio} outside [0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


def _channel_moments(x_adv: np.ndarray, x: np.ndarray):
    # (..., C, H, W) -> per-channel flattened moments over H, W
    a = x_adv.reshape(x_adv.shape[:-2] + (-1,))
    b = x.reshape(x.shape[:-2] + (-1,))
    mu_a = a.mean(-1, keepdims=True)
    mu_b = b.mean(-1, keepdims=True)
    da, db = a - mu_a, b - mu_b
    var_a = (da**2).mean(-1, keepdims=True)
    var_b = (db**2).mean(-1, keepdims=True)
    cov = (da * db).mean(-1, keepdims=True)
    return a, b, mu_a, mu_b, da, db, var_a, var_b, cov


def _check_shapes(x_adv, x):
    if x_adv.shape != x.shape:
        raise ValueError(f"shape mismatch: {x_adv.shape} vs {x.shape}")
    if x.ndim < 3:
        raise ValueError("images must be (C, H, W) or batched (N, C, H, W)")


def ssim_dissimilarity(x_adv, x, params: SsimParams = SsimParams()):
    """``1 - SSIM`` from whole-channel moments, averaged over channels.

    For a batch ``(N, C, H, W)`` a length-N array is returned.
    """
    x_adv = np.asarray(x_adv, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_shapes(x_adv, x)
    _, _, mu_a, mu_b, _, _, var_a, var_b, cov = _channel_moments(x_adv, x)
    c1, c2 = params.c1, params.c2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    d = 1.0 - s[..., 0].mean(-1)
    return float(d) if np.ndim(d) == 0 else d


def ssim_dissimilarity_grad(x_adv, x, params: SsimParams = SsimParams()):
    """Gradient of :func:`ssim_dissimilarity` with respect to ``x_adv``.

    Same shape as ``x_adv``; for batches each sample's gradient is of its own D.
    """
    x_adv = np.asarray(x_adv, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_shapes(x_adv, x)
    _, _, mu_a, mu_b, da, db, var_a, var_b, cov = _channel_moments(x_adv, x)
    c1, c2 = params.c1, params.c2
    A = 2 * mu_a * mu_b + c1
    B = 2 * cov + c2
    C = mu_a**2 + mu_b**2 + c1
    E = var_a + var_b + c2
    s = A * B / (C * E)
    n = da.shape[-1]
    ds = s * (2 * mu_b / A + 2 * db / B - 2 * mu_a / C - 2 * da / E) / n
    n_channels = x.shape[-3]
    return (-ds / n_channels).reshape(x_adv.shape)


def relative_l2(x_adv, x):
    """``||x_adv - x|| / ||x||``; per sample for ``(N, C, H, W)`` batches."""
    x_adv = np.asarray(x_adv, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_adv.shape != x.shape:
        raise ValueError(f"shape mismatch: {x_adv.shape} vs {x.shape}")
    axes = tuple(range(-3, 0)) if x.ndim >= 4 else None
    ref = np.sqrt(np.sum(x**2, axis=axes))
    if np.any(ref == 0):
        raise DegenerateInputError("reference image has zero norm")
    r = np.sqrt(np.sum((x_adv - x) ** 2, axis=axes)) / ref
    return float(r) if np.ndim(r) == 0 else r


def _check_probs(p: np.ndarray) -> None:
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be a non-empty 1-D array")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("probability vector must be non-negative and sum to 1")


def cross_entropy(p, target: int) -> float:
    p = np.asarray(p, dtype=np.float64)
    _check_probs(p)
    if not 0 <= target < p.size:
        raise ValueError(f"target {target} outside 0..{p.size - 1}")
    return float(-np.log(max(p[target], PROB_FLOOR)))


def least_likely_class(p) -> int:
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty probability vector")
    # argmin returns the first occurrence, i.e. the lowest tied index
    return int(np.argmin(p))


def fooling_ratio(clean_preds, adv_preds) -> float:
    clean = np.asarray(clean_preds)
    adv = np.asarray(adv_preds)
    if clean.shape != adv.shape:
        raise ValueError(f"length mismatch: {clean.shape} vs {adv.shape}")
    if clean.size == 0:
        raise ValueError("fooling ratio of an empty set")
    return float(np.mean(clean != adv))
