from __future__ import annotations

import logging

import numpy as np

from ..numerics import Prng
from .nets import ClassifierNet
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


def accuracy(net: ClassifierNet, images: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(net.predict(images).argmax(axis=1) == labels))


def train_classifier(
    net: ClassifierNet,
    images: np.ndarray,
    labels: np.ndarray,
    rng: Prng,
    epochs: int = 5,
    batch_size: int = 32,
    lr: float = 1e-3,
    test: tuple[np.ndarray, np.ndarray] | None = None,
    cosine: bool = True,
) -> list[dict]:
    """Minibatch cross-entropy training with Adam; returns one log row per epoch.

    With ``cosine`` the step size decays from ``lr`` to zero over the run.
    """
    state = AdamState(lr=lr, beta1=0.9, beta2=0.999)
    params = net.parameters()
    n = len(images)
    steps_per_epoch = -(-n // batch_size)
    total_steps = epochs * steps_per_epoch
    rows = []
    for epoch in range(1, epochs + 1):
        order = rng.child(f"epoch{epoch}").permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            if cosine:
                state.lr = 0.5 * lr * (1 + np.cos(np.pi * state.t / total_steps))
            idx = order[start : start + batch_size]
            p = net.forward(images[idx])
            y = labels[idx]
            m = len(idx)
            py = np.maximum(p[np.arange(m), y], 1e-12)
            total += float(-np.log(py).sum())
            g = np.zeros_like(p)
            g[np.arange(m), y] = -1.0 / (py * m)
            net.backward(g)
            adam_step(state, params, net.gradients())
        row = {"epoch": epoch, "loss": total / n, "train_acc": accuracy(net, images, labels)}
        if test is not None:
            row["test_acc"] = accuracy(net, *test)
        log.info("classifier %s epoch %d: %s", net.variant, epoch, row)
        rows.append(row)
    return rows
