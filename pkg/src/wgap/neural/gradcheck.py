"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..numerics import Prng


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_tensor: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    @property
    def worst(self) -> str:
        return max(self.per_tensor, key=self.per_tensor.get) if self.per_tensor else ""


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    """Norm-wise relative error.

    ``floor`` bounds the denominator from below so tensors whose true gradient
    is zero (a bias feeding a normalisation layer) are judged against the
    network's overall gradient scale instead of their own rounding noise.
    """
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_grad(f: Callable[[], float], arr: np.ndarray, idx, step: float) -> np.ndarray:
    out = np.zeros(len(idx))
    flat = arr.reshape(-1)
    for n, i in enumerate(idx):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        out[n] = (up - down) / (2 * step)
    return out


def grad_check(
    net,
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    tolerance: float = 1e-3,
    step: float = 1e-4,
    max_entries: int = 40,
    seed: int = 0,
) -> GradCheckReport:
    """Compare ``net.backward`` against central differences.

    ``loss_fn(output)`` returns ``(loss, dloss/doutput)``.  Every parameter
    tensor and the input are checked on at most ``max_entries`` entries each,
    picked by a seeded stream.
    """
    x = np.array(x, dtype=np.float64)
    loss, g_out = loss_fn(net.forward(x))
    g_in = net.backward(g_out)
    grads = {k: v.copy() for k, v in net.named_grads()}

    def total() -> float:
        return float(loss_fn(net.forward(x))[0])

    rng = Prng(seed)
    tensors = dict(net.named_params())
    tensors["<input>"] = x
    analytic = dict(grads)
    analytic["<input>"] = g_in
    report = GradCheckReport(0.0, tolerance)
    floor = 1e-6 * max(max(np.linalg.norm(g) for g in analytic.values()), 1e-12)
    for name, arr in tensors.items():
        n = arr.size
        idx = np.arange(n) if n <= max_entries else np.sort(rng.child(name).permutation(n)[:max_entries])
        num = numeric_grad(total, arr, idx, step)
        err = rel_error(analytic[name].reshape(-1)[idx], num, floor)
        report.per_tensor[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report
