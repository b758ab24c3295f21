"""Writer for the consumer toolkit's WDR1 embedding file format.

Layout: magic ``WDR1``, u32 version (=1), u64 rows, u64 dim, then
rows*dim float32 little-endian row-major. Row identifiers go to a text
sidecar at ``<path>.ids``, one per line in row order. The file is written
to a temporary name and renamed into place so consumers never observe a
partial file.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"WDR1"
VERSION = 1


def write_embeddings(ids, data: np.ndarray, path) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2 or data.shape[0] != len(ids):
        raise ValueError(f"{len(ids)} ids for embedding array {data.shape}")
    rows, dim = data.shape
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQQ", VERSION, rows, dim))
        fh.write(data.tobytes())
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    tmp_ids = str(path) + ".ids.tmp"
    with open(tmp_ids, "w", encoding="utf-8", newline="\n") as fh:
        for row_id in ids:
            fh.write(row_id + "\n")
    os.replace(tmp_ids, str(path) + ".ids")


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    """Minimal reader used by this package's own tests."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, rows, dim = struct.unpack("<IQQ", fh.read(20))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read()
    if len(payload) != rows * dim * 4:
        raise ValueError(f"{path}: truncated payload")
    with open(str(path) + ".ids", "r", encoding="utf-8") as fh:
        ids = [line.rstrip("\n") for line in fh if line != ""]
    if len(ids) != rows:
        raise ValueError(f"{path}: sidecar length {len(ids)} != rows {rows}")
    return ids, np.frombuffer(payload, dtype="<f4").reshape(rows, dim).copy()
