"""Flat binary parameter checkpoints.

Layout: magic ``SLRT``, version u32, then one record per parameter
group: name length u32, utf-8 name, rank u32, each dim u32, raw
little-endian float64 values in row-major order. All integers are
little-endian. Groups appear in insertion order and are read back in
the same order.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .exceptions import DataError

MAGIC = b"SLRT"
VERSION = 1


def save_checkpoint(path: str, groups: dict[str, np.ndarray]) -> None:
    """Write groups atomically (temp file + rename in the target dir)."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in groups.items():
        arr = np.asarray(arr, dtype="<f8")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    payload = b"".join(chunks)

    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise DataError(f"{path}: truncated checkpoint while reading {what}")
        piece = blob[pos : pos + n]
        pos += n
        return piece

    pos = 0
    if take(4, "magic") != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")

    groups: dict[str, np.ndarray] = {}
    while pos < len(blob):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        count = 1
        for d in dims:
            count *= d
        values = np.frombuffer(take(8 * count, f"values of '{name}'"), dtype="<f8")
        groups[name] = values.reshape(dims).astype(np.float64)
    return groups
