"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"WGAP"            magic
    u32                format version (1)
    u32                tensor count
    per tensor:
        u32            name length in bytes
        bytes          UTF-8 name
        u32            rank
        u64 * rank     extents
        f64 * prod     row-major data
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"WGAP"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def dump_checkpoint(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def parse_checkpoint(buf: bytes) -> dict[str, np.ndarray]:
    def take(fmt: str, off: int):
        size = struct.calcsize(fmt)
        if off + size > len(buf):
            raise CheckpointFormatError(f"truncated checkpoint at byte {off}")
        return struct.unpack_from(fmt, buf, off), off + size

    if buf[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    (version, count), off = take("<II", 4)
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,), off = take("<I", off)
        if off + n > len(buf):
            raise CheckpointFormatError(f"truncated checkpoint at byte {off}")
        name = buf[off : off + n].decode("utf-8")
        off += n
        (rank,), off = take("<I", off)
        shape, off = take(f"<{rank}Q", off)
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if off + nbytes > len(buf):
            raise CheckpointFormatError(f"truncated checkpoint at byte {off}")
        out[name] = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=off).reshape(shape).astype(np.float64)
        off += nbytes
    if off != len(buf):
        raise CheckpointFormatError(f"{len(buf) - off} trailing bytes after tensor {count}")
    return out


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dump_checkpoint(tensors))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    return parse_checkpoint(Path(path).read_bytes())
