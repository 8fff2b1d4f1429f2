"""Binary tensor container and atomic file writes.

Layout (all little-endian)::

    magic    8 bytes  b"TRIEMBCK"
    version  uint32
    count    uint32
    count x  { name_len uint32, name utf-8, rank uint32,
               dims rank x uint64, payload prod(dims) x float64 }
"""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"TRIEMBCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def decode_tensors(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a tensor container (bad magic)")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported container version {version}")
    pos = 16
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", buf, pos)
            pos += 8 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 8 * size > len(buf):
                raise CheckpointError(f"tensor {name!r} is truncated")
            out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).astype(np.float64).reshape(dims)
            pos += 8 * size
    except struct.error as exc:
        raise CheckpointError(f"truncated container: {exc}") from exc
    return out


def save_tensors(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    atomic_write_bytes(path, encode_tensors(tensors))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())
