"""Datasets: IDX ubyte files and a procedural 10-class image set."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numerics import Prng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

SYNTH_CLASSES = (
    "bar_0",
    "bar_45",
    "bar_90",
    "bar_135",
    "disk",
    "checker_fine",
    "checker_coarse",
    "corner_ramp",
    "rings",
    "noise_texture",
)


# Mid-grey background with moderate shape contrast, as in natural photographs
# where most of the image energy sits in the mean.  With high-contrast shapes
# on black, a 10% relative-L2 budget is too small to move any classifier.
AMPLITUDE = (0.2, 0.1)  # shape contrast: lo + span * u
BACKGROUND = (0.35, 0.2)
NOISE_STD = 0.005


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W), values in [0, 1]
    labels: np.ndarray  # (N,) int
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label outside 0..num_classes-1")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.num_classes, self.split)


def _read_header(buf: bytes, path, magic: int, dims: int) -> tuple[int, ...]:
    size = 4 * (1 + dims)
    if len(buf) < size:
        raise IdxFormatError(f"{path}: truncated header ({len(buf)} bytes, need {size}) at byte offset 0")
    head = struct.unpack(f">{1 + dims}I", buf[:size])
    if head[0] != magic:
        raise IdxFormatError(f"{path}: bad magic at byte offset 0: expected 0x{magic:08x}, got 0x{head[0]:08x}")
    return head[1:]


def load_idx(images_path, labels_path, pad_to: int = 32, split: str = "train") -> Dataset:
    """Read an IDX image/label pair; pixels scaled to [0, 1] and zero-padded to ``pad_to``."""
    ibuf = Path(images_path).read_bytes()
    lbuf = Path(labels_path).read_bytes()
    n, rows, cols = _read_header(ibuf, images_path, IMAGE_MAGIC, 3)
    (n_labels,) = _read_header(lbuf, labels_path, LABEL_MAGIC, 1)
    if n != n_labels:
        raise IdxFormatError(f"count mismatch: {n} images vs {n_labels} labels (byte offset 4)")
    need = 16 + n * rows * cols
    if len(ibuf) < need:
        raise IdxFormatError(f"{images_path}: truncated pixel data at byte offset {len(ibuf)}, expected {need} bytes")
    if len(lbuf) < 8 + n:
        raise IdxFormatError(f"{labels_path}: truncated label data at byte offset {len(lbuf)}, expected {8 + n} bytes")
    pix = np.frombuffer(ibuf, dtype=np.uint8, count=n * rows * cols, offset=16)
    labels = np.frombuffer(lbuf, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    imgs = pix.reshape(n, 1, rows, cols).astype(np.float64) / 255.0
    if rows < pad_to or cols < pad_to:
        top, left = (pad_to - rows) // 2, (pad_to - cols) // 2
        out = np.zeros((n, 1, max(rows, pad_to), max(cols, pad_to)))
        out[:, :, top : top + rows, left : left + cols] = imgs
        imgs = out
    num_classes = int(labels.max()) + 1 if n else 1
    return Dataset(imgs, labels, max(num_classes, 10), split)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write (N, H, W) uint8 images and (N,) labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols) + images.tobytes())
    Path(labels_path).write_bytes(
        struct.pack(">II", LABEL_MAGIC, n) + np.asarray(labels, dtype=np.uint8).tobytes()
    )


def _render(cls: int, rng: Prng, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u = rng.uniform(8)
    cy = size / 2 + (u[0] - 0.5) * 8
    cx = size / 2 + (u[1] - 0.5) * 8
    amp = AMPLITUDE[0] + AMPLITUDE[1] * u[2]
    bg = BACKGROUND[0] + BACKGROUND[1] * u[3]
    name = SYNTH_CLASSES[cls]
    if name.startswith("bar_"):
        theta = np.deg2rad(float(name[4:]) + (u[4] - 0.5) * 10)
        # distance from the line through (cy, cx) with direction theta
        dist = np.abs(-(xx - cx) * np.sin(theta) + (yy - cy) * np.cos(theta))
        width = 2.0 + 1.5 * u[5]
        img = (dist < width).astype(float)
    elif name == "disk":
        r = 6 + 4 * u[4]
        img = (np.hypot(yy - cy, xx - cx) < r).astype(float)
    elif name.startswith("checker"):
        cell = 4 if name == "checker_fine" else 8
        oy, ox = int(u[4] * cell), int(u[5] * cell)
        img = (((yy + oy) // cell + (xx + ox) // cell) % 2).astype(float)
    elif name == "corner_ramp":
        corner = int(u[4] * 4)
        ry = yy if corner & 1 else size - 1 - yy
        rx = xx if corner & 2 else size - 1 - xx
        img = (ry + rx) / (2 * (size - 1))
    elif name == "rings":
        period = 5 + 3 * u[4]
        img = 0.5 + 0.5 * np.cos(2 * np.pi * np.hypot(yy - cy, xx - cx) / period + 2 * np.pi * u[5])
    else:
        img = np.kron(rng.uniform((size // 2, size // 2)), np.ones((2, 2)))
    img = bg + amp * _blur(img) + NOISE_STD * rng.normal((size, size))
    return np.clip(img, 0.0, 1.0)


_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _blur(img: np.ndarray) -> np.ndarray:
    """Separable 5-tap binomial blur (sigma ~ 1 px) with edge replication."""
    pad = np.pad(img, 2, mode="edge")
    rows = sum(w * pad[:, k : k + img.shape[1]] for k, w in enumerate(_BINOMIAL))
    return sum(w * rows[k : k + img.shape[0], :] for k, w in enumerate(_BINOMIAL))


def synth_dataset(seed: int, n_per_class: int, size: int = 32, split: str = "train") -> Dataset:
    """Balanced procedural dataset of 10 shape/texture classes on 1 x size x size grids.

    Sample ``i`` of class ``c`` is drawn from its own named sub-stream, so the
    content of one sample never depends on how many others were requested.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    root = Prng(seed).child(f"synth/{split}")
    n = n_per_class * len(SYNTH_CLASSES)
    images = np.zeros((n, 1, size, size))
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n_per_class):
        for c in range(len(SYNTH_CLASSES)):
            k = i * len(SYNTH_CLASSES) + c
            images[k, 0] = _render(c, root.child(f"{c}/{i}"), size)
            labels[k] = c
    return Dataset(images, labels, len(SYNTH_CLASSES), split)
