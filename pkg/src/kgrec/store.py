"""Bit-exact persistence for embedding matrices and model checkpoints.

Three little-endian binary formats, each with a fixed magic:

* ``WDR1`` -- embedding matrix: magic, u32 version (=1), u64 rows, u64 dim,
  then rows*dim float32 row-major.  Identifiers live in a text sidecar at
  ``<path>.ids``, one per line in row order.
* ``WDRP`` -- per-relation projection matrices: magic, u64 relations,
  u64 dim, then one dim*dim float32 block per relation.  Relation ids in
  the ``<path>.ids`` sidecar.
* ``WDRG`` -- gate checkpoint: magic, u64 dim, u64 hidden, then the three
  layers' weights and biases in layer order.

Files are immutable once written; writers hold an advisory lock on the
target while producing it.
"""

from __future__ import annotations

import fcntl
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    BadVersionError,
    DimensionMismatchError,
    SidecarMismatchError,
    TruncatedPayloadError,
)

EMBEDDING_MAGIC = b"WDR1"
PROJECTION_MAGIC = b"WDRP"
GATE_MAGIC = b"WDRG"
EMBEDDING_VERSION = 1


@dataclass
class EmbeddingMatrix:
    """Dense rows of fixed-dimension vectors with an identifier per row."""

    ids: tuple[str, ...]
    data: np.ndarray  # (rows, dim) float32

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise DimensionMismatchError("embedding data must be 2-dimensional")
        if self.data.shape[0] != len(self.ids):
            raise DimensionMismatchError(
                f"{len(self.ids)} ids for {self.data.shape[0]} rows"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("embedding data contains non-finite values")
        self._index = {item_id: row for row, item_id in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise ValueError("duplicate ids in embedding matrix")

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    def row(self, item_id: str) -> np.ndarray:
        return self.data[self._index[item_id]]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._index

    def align(self, wanted_ids) -> tuple[np.ndarray, int]:
        """Rows reordered to ``wanted_ids``; absent ids become zero rows.

        Returns the aligned float32 array and the count of missing ids.
        """
        out = np.zeros((len(wanted_ids), self.dim), dtype=np.float32)
        missing = 0
        for pos, item_id in enumerate(wanted_ids):
            row = self._index.get(item_id)
            if row is None:
                missing += 1
            else:
                out[pos] = self.data[row]
        return out, missing


def _write_sidecar(path, ids):
    with open(str(path) + ".ids", "w", encoding="utf-8", newline="\n") as fh:
        for item_id in ids:
            fh.write(item_id + "\n")


def _read_sidecar(path) -> tuple[str, ...]:
    with open(str(path) + ".ids", "r", encoding="utf-8") as fh:
        return tuple(line.rstrip("\n") for line in fh if line != "")


def _locked_write(path, produce):
    """Write ``produce(fh)`` to ``path`` under an advisory lock, then fsync."""
    try:
        with open(path, "wb") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            produce(fh)
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise OSError(f"while writing {path}: {exc}") from exc


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    data = np.ascontiguousarray(matrix.data, dtype="<f4")

    def produce(fh):
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<IQQ", EMBEDDING_VERSION, matrix.rows, matrix.dim))
        fh.write(data.tobytes())

    _locked_write(path, produce)
    _write_sidecar(path, matrix.ids)


def read_embeddings(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDING_MAGIC:
            raise BadMagicError(path, f"bad magic {magic!r}")
        header = fh.read(20)
        if len(header) < 20:
            raise TruncatedPayloadError(path, "header truncated")
        version, rows, dim = struct.unpack("<IQQ", header)
        if version != EMBEDDING_VERSION:
            raise BadVersionError(path, f"unsupported version {version}")
        payload = fh.read()
    expected = rows * dim * 4
    if len(payload) != expected:
        raise TruncatedPayloadError(
            path, f"payload is {len(payload)} bytes, expected {expected}"
        )
    ids = _read_sidecar(path)
    if len(ids) != rows:
        raise SidecarMismatchError(
            path, f"sidecar has {len(ids)} ids for {rows} rows"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, dim).copy()
    return EmbeddingMatrix(ids=ids, data=data)


def write_projections(relation_ids, projections: np.ndarray, path) -> None:
    """Write per-relation square projection matrices (``WDRP``)."""
    projections = np.asarray(projections, dtype="<f4")
    if projections.ndim != 3 or projections.shape[1] != projections.shape[2]:
        raise DimensionMismatchError("projections must be (relations, dim, dim)")
    if projections.shape[0] != len(relation_ids):
        raise DimensionMismatchError(
            f"{len(relation_ids)} ids for {projections.shape[0]} projections"
        )
    n_rel, dim = projections.shape[0], projections.shape[1]

    def produce(fh):
        fh.write(PROJECTION_MAGIC)
        fh.write(struct.pack("<QQ", n_rel, dim))
        fh.write(np.ascontiguousarray(projections).tobytes())

    _locked_write(path, produce)
    _write_sidecar(path, relation_ids)


def read_projections(path) -> tuple[tuple[str, ...], np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != PROJECTION_MAGIC:
            raise BadMagicError(path, f"bad magic {magic!r}")
        header = fh.read(16)
        if len(header) < 16:
            raise TruncatedPayloadError(path, "header truncated")
        n_rel, dim = struct.unpack("<QQ", header)
        payload = fh.read()
    expected = n_rel * dim * dim * 4
    if len(payload) != expected:
        raise TruncatedPayloadError(
            path, f"payload is {len(payload)} bytes, expected {expected}"
        )
    ids = _read_sidecar(path)
    if len(ids) != n_rel:
        raise SidecarMismatchError(
            path, f"sidecar has {len(ids)} ids for {n_rel} relations"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n_rel, dim, dim).copy()
    return ids, data


def write_gate(params, path) -> None:
    """Write a gate checkpoint (``WDRG``).

    ``params`` must expose ``dim``, ``hidden`` and the six layer arrays
    ``w1, b1, w2, b2, w3, b3``.
    """

    def produce(fh):
        fh.write(GATE_MAGIC)
        fh.write(struct.pack("<QQ", params.dim, params.hidden))
        for arr in (params.w1, params.b1, params.w2, params.b2, params.w3, params.b3):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    _locked_write(path, produce)


def read_gate(path):
    from .fusion import GateParams  # deferred: fusion imports store

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GATE_MAGIC:
            raise BadMagicError(path, f"bad magic {magic!r}")
        header = fh.read(16)
        if len(header) < 16:
            raise TruncatedPayloadError(path, "header truncated")
        dim, hidden = struct.unpack("<QQ", header)
        payload = fh.read()
    shapes = [
        (hidden, 3),
        (hidden,),
        (hidden, hidden),
        (hidden,),
        (3, hidden),
        (3,),
    ]
    expected = sum(int(np.prod(s)) for s in shapes) * 4
    if len(payload) != expected:
        raise TruncatedPayloadError(
            path, f"payload is {len(payload)} bytes, expected {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    arrays = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(flat[offset : offset + size].reshape(shape).astype(np.float64))
        offset += size
    w1, b1, w2, b2, w3, b3 = arrays
    return GateParams(dim=dim, hidden=hidden, w1=w1, b1=b1, w2=w2, b2=b2, w3=w3, b3=b3)
