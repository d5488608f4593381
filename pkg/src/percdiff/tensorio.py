"""Flat binary tensor blobs with a small self-describing header.

Layout: 4-byte magic ``PDTB``, uint32 header length, UTF-8 JSON header
``{"dtype": ..., "shape": [...]}``, then the raw C-order array bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PDTB"


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array)
    header = json.dumps({"dtype": array.dtype.str, "shape": list(array.shape)}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(array.tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        data = f.read()
    arr = np.frombuffer(data, dtype=np.dtype(header["dtype"]))
    return arr.reshape(header["shape"]).copy()
